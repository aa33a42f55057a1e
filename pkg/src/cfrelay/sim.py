"""Monte Carlo BER/FER sweeps of the relay pipeline.

A trial simulates one two-slot episode of the block timeline: the source
transmits a fresh codeword block, the relay quantizes what it heard and
forwards the coded description during the next slot, and the destination
decodes the block from its own interference-free observation plus the
next-slot observation that carries the description under source
interference.  Episodes are independent, which matches the steady state
of the chained timeline once earlier relay words have been decoded and
subtracted.

Every random draw is keyed on (seed, snr index, trial, stream), never on
the scheme, so schemes that share code geometry see identical payloads
and noise.  Trials within an SNR point may run in worker processes; the
per-trial error counts are integers collected in trial order, so results
are byte-identical for any worker count.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import joint_decoder as jd
from . import ldpc, mlc_rates, scalar_baseline, tcq
from .channel import ChannelParams, complex_awgn, relay_observe
from .constellation import Constellation, build, map_bits, symbol_posterior, level_llr

SCHEMES = ("tcq_cf", "scalar_cf", "direct_only", "bicm")

# config keys, their parsers, and defaults; the single source of truth
# for what a config file may contain
_KEY_SPECS: dict[str, tuple] = {
    "modulation": (str, "qam16"),
    "labeling": (str, "auto"),
    "relay_modulation": (str, "qam16"),
    "n": (int, 4096),
    "source_rates": ("rates", (Fraction(7, 8), Fraction(13, 16), Fraction(7, 8), Fraction(13, 16))),
    "relay_col_weight": (int, 3),
    "snr_db": ("floats", (10.0, 10.5, 11.0, 11.5, 12.0)),
    "trials": (int, 100),
    "seed": (int, 0),
    "scheme": (str, "tcq_cf"),
    "max_outer_iters": (int, 60),
    "finish_iters": (int, 20),
    "h13": (float, 1.0),
    "h12": (float, 2.0),
    "h23": (float, 11.0),
    "n2_var": (float, 8.0),
    "n3_var": (float, 1.0),
    "pr_over_ps": (float, 1.0),
    "interference_model": (str, "h13"),
    "ring_ratio": (float, 1.3),
    "quantizer": (str, "auto"),
    "choice_samples": (int, 6000),
    "refine_samples": (int, 120_000),
    "table_samples": (int, 50_000),
    "mi_samples": (int, 60_000),
    "rate_margin": (float, 0.02),
    "workers": (int, 1),
}


@dataclass(frozen=True)
class SimConfig:
    """One sweep: geometry, channel, scheme, and budget knobs.

    quantizer selects the relay design for tcq_cf: "auto" scores a small
    candidate family with the mutual-information evaluator, "fast" takes
    the distortion-refined codebook directly, and any other value is read
    as a saved-quantizer path.
    """

    modulation: str = "qam16"
    labeling: str = "auto"
    relay_modulation: str = "qam16"
    n: int = 4096
    source_rates: tuple[Fraction, ...] = (
        Fraction(7, 8), Fraction(13, 16), Fraction(7, 8), Fraction(13, 16),
    )
    relay_col_weight: int = 3
    snr_db: tuple[float, ...] = (10.0, 10.5, 11.0, 11.5, 12.0)
    trials: int = 100
    seed: int = 0
    scheme: str = "tcq_cf"
    max_outer_iters: int = 60
    finish_iters: int = 20
    h13: float = 1.0
    h12: float = 2.0
    h23: float = 11.0
    n2_var: float = 8.0
    n3_var: float = 1.0
    pr_over_ps: float = 1.0
    interference_model: str = "h13"
    ring_ratio: float = 1.3
    quantizer: str = "auto"
    choice_samples: int = 6000
    refine_samples: int = 120_000
    table_samples: int = 50_000
    mi_samples: int = 60_000
    rate_margin: float = 0.02
    workers: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.n < 1 or self.trials < 1 or self.workers < 1:
            raise ValueError("n, trials, and workers must be positive")
        if not self.snr_db:
            raise ValueError("snr_db must list at least one point")
        if not self.source_rates:
            raise ValueError("source_rates must list at least one level")
        for r in self.source_rates:
            if not 0 < r < 1:
                raise ValueError(f"source rate {r} outside (0, 1)")

    def channel_at(self, snr_db: float) -> ChannelParams:
        """Channel numbers at one sweep SNR: fixed noise, swept power."""
        ps = self.n3_var * 10.0 ** (snr_db / 10.0)
        return ChannelParams(
            h13=self.h13,
            h12=self.h12,
            h23=self.h23,
            ps=ps,
            pr=self.pr_over_ps * ps,
            n2_var=self.n2_var,
            n3_var=self.n3_var,
            interference_model=self.interference_model,
        )


def _parse_rates(text: str) -> tuple[Fraction, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        out.append(Fraction(part) if "/" in part else Fraction(part).limit_denominator(10**6))
    return tuple(out)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(",") if p.strip())


def parse_config(text: str) -> SimConfig:
    """Flat key=value text into a SimConfig; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _KEY_SPECS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        kind = _KEY_SPECS[key][0]
        try:
            if kind == "rates":
                values[key] = _parse_rates(val)
            elif kind == "floats":
                values[key] = _parse_floats(val)
            else:
                values[key] = kind(val)
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {e}") from None
    return SimConfig(**values)


def load_config(path: str) -> SimConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _regular_pair(rate: Fraction, n: int) -> tuple[int, int]:
    """Smallest (column weight, row weight) realizing 1 - wc/wr = rate."""
    gap = 1 - rate
    for wc in range(3, 9):
        wr = wc / gap
        if wr.denominator == 1 and (n * wc) % int(wr) == 0:
            return wc, int(wr)
    raise ValueError(f"invalid geometry: no regular code of rate {rate} at length {n}")


@dataclass
class _Context:
    """Per-process decode context, built once per scheme and reused."""

    cfg: SimConfig
    const: Constellation
    relay_const: Constellation
    source_codes: list
    relay_codes: list
    info_bits: int
    decoders: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)


def _resolve_labeling(cfg: SimConfig) -> str | None:
    if cfg.labeling != "auto":
        return cfg.labeling
    return "gray" if cfg.scheme == "bicm" else None


def build_context(cfg: SimConfig) -> _Context:
    """Constellations and codes shared by every SNR point of a sweep."""
    const = build(cfg.modulation, _resolve_labeling(cfg))
    relay_const = build(cfg.relay_modulation)
    m = const.num_levels
    if len(cfg.source_rates) != m:
        raise ValueError(
            f"invalid geometry: {len(cfg.source_rates)} source rates "
            f"for {m} levels"
        )
    n = cfg.n
    if cfg.scheme == "bicm":
        mean_rate = sum(cfg.source_rates, Fraction(0)) / m
        wc, wr = _regular_pair(mean_rate, m * n)
        codes = [ldpc.gen_regular(m * n, wc, wr, seed=_derived_seed(cfg.seed, 90))]
    else:
        codes = []
        for i, rate in enumerate(cfg.source_rates):
            wc, wr = _regular_pair(rate, n)
            codes.append(ldpc.gen_regular(n, wc, wr, seed=_derived_seed(cfg.seed, 91, i)))
    m_r = relay_const.num_levels
    wc = cfg.relay_col_weight
    relay_codes = [
        ldpc.gen_regular(2 * n, wc, 2 * wc, seed=_derived_seed(cfg.seed, 92, j))
        for j in range(m_r)
    ]
    info_bits = sum(len(c.info_positions) for c in codes)
    return _Context(
        cfg=cfg,
        const=const,
        relay_const=relay_const,
        source_codes=codes,
        relay_codes=relay_codes,
        info_bits=info_bits,
    )


def _design_tcq(cfg: SimConfig, const: Constellation, params: ChannelParams,
                snr_idx: int) -> tcq.QuantizerModel:
    base = params.h12 * np.sqrt(params.ps)
    if cfg.quantizer not in ("auto", "fast"):
        model = tcq.load_quantizer(cfg.quantizer)
        if model.choice_probs is None:
            tcq.estimate_choice_probs(
                model, const, params,
                samples_per_symbol=cfg.choice_samples,
                seed=_derived_seed(cfg.seed, snr_idx, 80),
            )
        return model

    rng = np.random.default_rng(_derived_seed(cfg.seed, snr_idx, 81))
    sym = rng.integers(0, const.size, cfg.refine_samples)
    train = relay_observe(params, const.points[sym], rng)

    if cfg.quantizer == "fast":
        stock = tcq.make_model(kind=const.kind, scale=base)
        refined_cb = tcq.refine_codebook(
            stock.trellis, stock.labeling, stock.codebook, train, iters=12
        )
        winner = tcq.QuantizerModel(
            trellis=stock.trellis, labeling=stock.labeling,
            codebook=refined_cb, cell_mode="state",
        )
        tcq.estimate_choice_probs(
            winner, const, params, samples_per_symbol=cfg.choice_samples,
            seed=_derived_seed(cfg.seed, snr_idx, 82),
        )
        return winner

    evaluator = mlc_rates.make_rate_evaluator(
        const, params, num_samples=cfg.mi_samples,
        seed=_derived_seed(cfg.seed, snr_idx, 83),
    )
    result = tcq.optimize_boundaries(
        const, params, evaluator,
        kind=const.kind,
        scale_grid=np.array([0.9, 1.0, 1.1]),
        ratio_grid=np.array([1.3, 1.6, 1.9]) if const.kind == "psk16" else None,
        choice_samples=cfg.choice_samples,
        seed=_derived_seed(cfg.seed, snr_idx, 82),
        refine_samples=train,
    )
    return result["model"]


def _design_model(cfg: SimConfig, const: Constellation, params: ChannelParams,
                  snr_idx: int) -> tcq.QuantizerModel | None:
    if cfg.scheme == "direct_only":
        return None
    if cfg.scheme == "tcq_cf":
        return _design_tcq(cfg, const, params, snr_idx)
    return scalar_baseline.design_relay_scalar(
        const, params, num_samples=200_000,
        seed=_derived_seed(cfg.seed, snr_idx, 84),
    )


def _check_rate_profile(cfg: SimConfig, const: Constellation, params: ChannelParams,
                        model: tcq.QuantizerModel | None, snr_idx: int, snr_db: float):
    mis, _ = mlc_rates.mi_source_levels(
        const, params, model,
        num_samples=cfg.mi_samples,
        seed=_derived_seed(cfg.seed, snr_idx, 85),
        include_relay=model is not None,
    )
    if cfg.scheme == "bicm":
        mean_rate = float(sum(cfg.source_rates) / len(cfg.source_rates))
        if mean_rate > float(np.mean(mis)) - cfg.rate_margin:
            warnings.warn(
                f"snr {snr_db} dB: bicm rate {mean_rate:.4f} exceeds mean level "
                f"MI {float(np.mean(mis)):.4f} - margin; proceeding",
                stacklevel=2,
            )
        return
    bad = [
        f"level {i + 1}: rate {float(r):.4f} > MI {mis[i]:.4f} - margin"
        for i, r in enumerate(cfg.source_rates)
        if float(r) > mis[i] - cfg.rate_margin
    ]
    if bad:
        warnings.warn(
            f"snr {snr_db} dB: rate profile infeasible ({'; '.join(bad)}); proceeding",
            stacklevel=2,
        )


def _snr_context(ctx: _Context, snr_idx: int, check_rates: bool = False):
    """Design the quantizer and decoder for one SNR point, cached."""
    if snr_idx in ctx.decoders:
        return ctx.decoders[snr_idx]
    cfg = ctx.cfg
    snr_db = cfg.snr_db[snr_idx]
    params = cfg.channel_at(snr_db)
    model = _design_model(cfg, ctx.const, params, snr_idx)
    if check_rates:
        _check_rate_profile(cfg, ctx.const, params, model, snr_idx, snr_db)
    if cfg.scheme == "direct_only":
        entry = (params, None, None)
    else:
        table = tcq.empirical_point_table(
            model, ctx.const, params,
            samples_per_symbol=cfg.table_samples,
            seed=_derived_seed(cfg.seed, snr_idx, 86),
        )
        decoder = jd.JointDecoder(
            ctx.const, ctx.relay_const, model, params,
            ctx.source_codes, ctx.relay_codes, table=table,
        )
        entry = (params, model, decoder)
    ctx.decoders[snr_idx] = entry
    return entry


def _direct_decode(ctx: _Context, post: np.ndarray, finish_iters: int):
    """Multistage decode on the direct branch alone."""
    const = ctx.const
    m = const.num_levels
    n = ctx.cfg.n
    known = np.zeros((n, 0), dtype=np.uint8)
    infos = []
    iters = []
    for i, code in enumerate(ctx.source_codes):
        llrs = level_llr(const, post, i + 1, known)
        hard, _, it = ldpc.decode(code, llrs, max_iters=finish_iters)
        infos.append(hard[code.info_positions])
        iters.append(it)
        known = np.concatenate([known, hard[:, None]], axis=1)
    return infos, int(np.max(iters))


def simulate_trial(ctx: _Context, snr_idx: int, trial: int) -> tuple[int, int, int]:
    """One episode; returns (info bit errors, frame error flag, iterations)."""
    cfg = ctx.cfg
    params, model, decoder = _snr_context(ctx, snr_idx)
    n = cfg.n
    m = ctx.const.num_levels
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, snr_idx, trial, 11])
    )

    # canonical draw order keeps payload and noise scheme-independent
    infos = []
    label = np.zeros((n, m), dtype=np.uint8)
    if cfg.scheme == "bicm":
        code = ctx.source_codes[0]
        ib = rng.integers(0, 2, code.k).astype(np.uint8)
        infos.append(ib)
        cw = ldpc.encode(code, ib)
        g = np.arange(code.n)
        label[g // m, g % m] = cw
    else:
        cws = []
        for code in ctx.source_codes:
            ib = rng.integers(0, 2, code.k).astype(np.uint8)
            infos.append(ib)
            cws.append(ldpc.encode(code, ib))
        label[:] = np.stack(cws, axis=1)
    next_label = rng.integers(0, 2, (n, m)).astype(np.uint8)
    w2 = complex_awgn(rng, n, params.n2_var)
    w13 = complex_awgn(rng, n, params.n3_var)
    w23 = complex_awgn(rng, n, params.n3_var)

    x1 = map_bits(ctx.const, label)
    y13 = params.h13 * np.sqrt(params.ps) * x1 + w13

    if cfg.scheme == "direct_only":
        post = symbol_posterior(ctx.const, y13, params.h13, params.ps, params.n3_var)
        dec_infos, iters = _direct_decode(ctx, post, cfg.finish_iters)
    else:
        y2 = params.h12 * np.sqrt(params.ps) * x1 + w2
        res = tcq.viterbi_quantize(model.trellis, model.labeling, model.codebook, y2)
        flat = res.tilde_bits.T.ravel()
        segs = decoder.stream_segments()
        parities = []
        for j, code in enumerate(ctx.relay_codes):
            lo, hi = segs[j]
            parities.append(ldpc.encode(code, flat[lo:hi])[code.parity_positions])
        rl = jd.pack_relay_parity(parities, ctx.relay_const.num_levels, n)
        x2 = map_bits(ctx.relay_const, rl)
        x1_next = map_bits(ctx.const, next_label)
        y23 = (
            params.h13 * np.sqrt(params.ps) * x1_next
            + params.h23 * np.sqrt(params.pr) * x2
            + w23
        )
        out = jd.run(
            decoder, jd.init(decoder, y13, y23),
            max_outer_iters=cfg.max_outer_iters,
            finish_iters=cfg.finish_iters,
        )
        dec_infos, iters = out.level_info, out.outer_iters

    errs = sum(int((a != b).sum()) for a, b in zip(infos, dec_infos))
    return errs, int(errs > 0), iters


_G_CTX: _Context | None = None


def _worker_init(cfg: SimConfig):
    global _G_CTX
    _G_CTX = build_context(cfg)


def _worker_trial(args: tuple[int, int]) -> tuple[int, int, int]:
    snr_idx, trial = args
    return simulate_trial(_G_CTX, snr_idx, trial)


def run_sweep(cfg: SimConfig, progress=None) -> list[dict]:
    """Simulate every SNR point; one result row per point.

    Rows carry exact integer error totals along with the derived floats,
    so downstream accumulation never re-rounds.  progress, if given, is
    called as progress(snr_idx, rows_so_far) after each point.
    """
    ctx = build_context(cfg)
    rows = []
    pool = None
    try:
        if cfg.workers > 1:
            import multiprocessing as mp

            pool = ProcessPoolExecutor(
                max_workers=cfg.workers,
                mp_context=mp.get_context("spawn"),
                initializer=_worker_init,
                initargs=(cfg,),
            )
        for snr_idx, snr_db in enumerate(cfg.snr_db):
            _snr_context(ctx, snr_idx, check_rates=True)
            if pool is None:
                results = [
                    simulate_trial(ctx, snr_idx, t) for t in range(cfg.trials)
                ]
            else:
                args = [(snr_idx, t) for t in range(cfg.trials)]
                results = list(pool.map(_worker_trial, args, chunksize=8))
            errs = np.array([r[0] for r in results], dtype=np.int64)
            fes = np.array([r[1] for r in results], dtype=np.int64)
            iters = np.array([r[2] for r in results], dtype=np.int64)
            T = cfg.trials
            bits = ctx.info_bits
            ber = errs.sum() / (T * bits)
            fer = fes.sum() / T
            if T > 1:
                ber_ci = 1.96 * np.std(errs / bits, ddof=1) / np.sqrt(T)
                fer_ci = 1.96 * np.std(fes.astype(float), ddof=1) / np.sqrt(T)
            else:
                ber_ci = 0.0
                fer_ci = 0.0
            rows.append(
                {
                    "scheme": cfg.scheme,
                    "snr_db": float(snr_db),
                    "trials": T,
                    "ber": float(ber),
                    "ber_ci95": float(ber_ci),
                    "fer": float(fer),
                    "fer_ci95": float(fer_ci),
                    "mean_iters": float(iters.mean()),
                    "bit_errors": int(errs.sum()),
                    "bits": int(T * bits),
                }
            )
            if progress is not None:
                progress(snr_idx, rows)
    finally:
        if pool is not None:
            pool.shutdown()
    return rows


CSV_COLUMNS = ("scheme", "snr_db", "trials", "ber", "ber_ci95", "fer", "fer_ci95", "mean_iters")


def rows_to_csv(rows: list[dict]) -> str:
    """Fixed-format CSV text; identical rows give identical bytes."""
    lines = [
        "# cfrelay sweep v1",
        "# snr_db = 10*log10(ps/n3_var); fixed noise, swept power",
        ",".join(CSV_COLUMNS),
    ]
    for row in rows:
        lines.append(
            "%s,%.4f,%d,%.6e,%.6e,%.6e,%.6e,%.3f"
            % (
                row["scheme"],
                row["snr_db"],
                row["trials"],
                row["ber"],
                row["ber_ci95"],
                row["fer"],
                row["fer_ci95"],
                row["mean_iters"],
            )
        )
    return "\n".join(lines) + "\n"


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def plot_ber(rows: list[dict], path: str) -> None:
    """BER versus SNR on a log axis, one line per scheme, saved as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    schemes = []
    for row in rows:
        if row["scheme"] not in schemes:
            schemes.append(row["scheme"])
    for scheme in schemes:
        pts = [(r["snr_db"], r["ber"]) for r in rows if r["scheme"] == scheme]
        pts.sort()
        x = [p[0] for p in pts]
        y = [p[1] if p[1] > 0 else np.nan for p in pts]
        ax.semilogy(x, y, marker="o", label=scheme)
    ax.set_xlabel("SNR  $p_s/N_3$  (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def compare_baselines(configs: list[SimConfig], out_dir: str | None = None) -> list[dict]:
    """Run several schemes on one channel and merge the result rows.

    All configs must agree on the SNR grid and the channel numbers.  When
    out_dir is given, writes compare.csv and compare.svg there.
    """
    if not configs:
        raise ValueError("empty config set")
    ref = configs[0]
    for cfg in configs[1:]:
        if cfg.snr_db != ref.snr_db:
            raise ValueError("grid mismatch: configs use different snr_db lists")
        for key in ("h13", "h12", "h23", "n2_var", "n3_var", "pr_over_ps", "n"):
            if getattr(cfg, key) != getattr(ref, key):
                raise ValueError(f"grid mismatch: configs disagree on {key}")
    rows = []
    for cfg in configs:
        rows.extend(run_sweep(cfg))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(rows, os.path.join(out_dir, "compare.csv"))
        plot_ber(rows, os.path.join(out_dir, "compare.svg"))
    return rows


def config_variants(cfg: SimConfig, schemes: list[str]) -> list[SimConfig]:
    """The same sweep under different schemes, for compare_baselines."""
    return [replace(cfg, scheme=s) for s in schemes]
