"""Command-line front end for BER/FER sweeps.

Reads a flat key=value config, applies any overrides, runs the sweep (or
a multi-scheme comparison when --scheme lists more than one), and writes
sweep.csv plus sweep.svg into the output directory.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import sim


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cfrelay",
        description="Monte Carlo sweeps for compress-forward relaying.",
    )
    p.add_argument("config", help="path to a key=value config file")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument(
        "--scheme",
        default=None,
        help="override the scheme; a comma list runs a comparison",
    )
    p.add_argument(
        "--snr",
        default=None,
        help="override the SNR sweep, comma-separated dB values",
    )
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = sim.load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.snr is not None:
            overrides["snr_db"] = tuple(float(s) for s in args.snr.split(",") if s.strip())
        schemes = None
        if args.scheme is not None:
            schemes = [s.strip() for s in args.scheme.split(",") if s.strip()]
            for s in schemes:
                if s not in sim.SCHEMES:
                    raise ValueError(f"unknown scheme {s!r}; choose from {sim.SCHEMES}")
            if len(schemes) == 1:
                overrides["scheme"] = schemes[0]
                schemes = None
        if overrides:
            from dataclasses import replace

            cfg = replace(cfg, **overrides)
    except (OSError, ValueError) as e:
        print(f"cfrelay: {e}", file=sys.stderr)
        return 2

    os.makedirs(args.out, exist_ok=True)
    if schemes is not None:
        rows = sim.compare_baselines(sim.config_variants(cfg, schemes))
    else:
        rows = sim.run_sweep(cfg)
    csv_path = os.path.join(args.out, "sweep.csv")
    svg_path = os.path.join(args.out, "sweep.svg")
    sim.write_csv(rows, csv_path)
    sim.plot_ber(rows, svg_path)
    for row in rows:
        print(
            "%s  %6.2f dB  ber %.3e  fer %.3e  iters %.1f"
            % (row["scheme"], row["snr_db"], row["ber"], row["fer"], row["mean_iters"])
        )
    print(f"wrote {csv_path} and {svg_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
