"""Tests for the sweep driver, config parsing, and the CLI."""

import os
from fractions import Fraction

import numpy as np
import pytest

from cfrelay import cli, sim


def tiny_config(**over):
    """Small geometry that still exercises every scheme."""
    base = dict(
        n=72,
        source_rates=(Fraction(2, 3),) * 4,
        snr_db=(16.0,),
        trials=2,
        seed=7,
        scheme="direct_only",
        quantizer="fast",
        refine_samples=20_000,
        choice_samples=1500,
        table_samples=4000,
        mi_samples=5000,
        max_outer_iters=40,
    )
    base.update(over)
    return sim.SimConfig(**base)


class TestConfig:
    def test_parse_roundtrip(self):
        cfg = sim.parse_config(
            "# comment\n"
            "n = 72\n"
            "trials=3\n"
            "scheme = scalar_cf\n"
            "snr_db = 10.0, 11.5\n"
            "source_rates = 2/3, 2/3, 2/3, 2/3\n"
        )
        assert cfg.n == 72
        assert cfg.trials == 3
        assert cfg.scheme == "scalar_cf"
        assert cfg.snr_db == (10.0, 11.5)
        assert cfg.source_rates == (Fraction(2, 3),) * 4

    def test_parse_unknown_key(self):
        with pytest.raises(ValueError, match="line 2: unknown config key"):
            sim.parse_config("n = 72\nbogus = 1\n")

    def test_parse_duplicate_key(self):
        with pytest.raises(ValueError, match="line 3: duplicate config key"):
            sim.parse_config("n = 72\ntrials = 2\nn = 36\n")

    def test_parse_bad_value(self):
        with pytest.raises(ValueError, match="line 1: bad value"):
            sim.parse_config("n = many\n")

    def test_parse_missing_equals(self):
        with pytest.raises(ValueError, match="expected key=value"):
            sim.parse_config("just some words\n")

    def test_validation(self):
        with pytest.raises(ValueError, match="scheme must be one of"):
            tiny_config(scheme="magic")
        with pytest.raises(ValueError, match="must be positive"):
            tiny_config(n=0)
        with pytest.raises(ValueError, match="at least one point"):
            tiny_config(snr_db=())
        with pytest.raises(ValueError, match="outside"):
            tiny_config(source_rates=(Fraction(2, 3),) * 3 + (Fraction(1, 1),))

    def test_rate_count_must_match_levels(self):
        cfg = tiny_config(source_rates=(Fraction(2, 3),) * 3)
        with pytest.raises(ValueError, match="invalid geometry: 3 source rates"):
            sim.build_context(cfg)

    def test_rate_without_regular_code(self):
        cfg = tiny_config(n=101, source_rates=(Fraction(9, 10),) * 4)
        with pytest.raises(ValueError, match="invalid geometry: no regular code"):
            sim.build_context(cfg)


class TestSweep:
    def test_direct_high_snr_is_error_free(self):
        rows = sim.run_sweep(tiny_config())
        assert len(rows) == 1
        assert rows[0]["ber"] == 0.0
        assert rows[0]["fer"] == 0.0
        assert rows[0]["mean_iters"] >= 0.0

    def test_tcq_high_snr_is_error_free(self):
        rows = sim.run_sweep(tiny_config(scheme="tcq_cf"))
        assert rows[0]["ber"] == 0.0
        assert rows[0]["fer"] == 0.0

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_direct_ber_monotone_in_snr(self):
        cfg = tiny_config(snr_db=(2.0, 8.0, 16.0), trials=8)
        rows = sim.run_sweep(cfg)
        bers = [r["ber"] for r in rows]
        assert bers[0] >= bers[1] >= bers[2]
        assert bers[0] > bers[2]

    def test_same_config_same_csv(self):
        cfg = tiny_config(trials=3)
        a = sim.rows_to_csv(sim.run_sweep(cfg))
        b = sim.rows_to_csv(sim.run_sweep(cfg))
        assert a == b

    def test_worker_count_does_not_change_csv(self):
        serial = tiny_config(trials=4, snr_db=(10.0,))
        parallel = tiny_config(trials=4, snr_db=(10.0,), workers=2)
        a = sim.rows_to_csv(sim.run_sweep(serial))
        b = sim.rows_to_csv(sim.run_sweep(parallel))
        assert a == b

    def test_trial_is_deterministic(self):
        ctx = sim.build_context(tiny_config(snr_db=(10.0,)))
        first = sim.simulate_trial(ctx, 0, 0)
        again = sim.simulate_trial(ctx, 0, 0)
        other = sim.simulate_trial(ctx, 0, 1)
        assert first == again
        assert first != other

    def test_bicm_uses_one_long_code(self):
        ctx = sim.build_context(tiny_config(scheme="bicm"))
        assert len(ctx.source_codes) == 1
        assert ctx.source_codes[0].n == 4 * 72
        assert ctx.info_bits == len(ctx.source_codes[0].info_positions)

    def test_csv_format_is_frozen(self):
        row = {
            "scheme": "direct_only",
            "snr_db": 10.5,
            "trials": 4,
            "ber": 0.012345,
            "ber_ci95": 0.001,
            "fer": 0.25,
            "fer_ci95": 0.05,
            "mean_iters": 3.75,
        }
        text = sim.rows_to_csv([row])
        lines = text.splitlines()
        assert lines[2] == "scheme,snr_db,trials,ber,ber_ci95,fer,fer_ci95,mean_iters"
        assert lines[3] == (
            "direct_only,10.5000,4,1.234500e-02,1.000000e-03,"
            "2.500000e-01,5.000000e-02,3.750"
        )


class TestCompare:
    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty config set"):
            sim.compare_baselines([])

    def test_grid_mismatch_rejected(self):
        a = tiny_config()
        b = tiny_config(snr_db=(12.0,))
        with pytest.raises(ValueError, match="different snr_db"):
            sim.compare_baselines([a, b])

    def test_channel_mismatch_rejected(self):
        a = tiny_config()
        b = tiny_config(h23=5.0)
        with pytest.raises(ValueError, match="disagree on h23"):
            sim.compare_baselines([a, b])

    def test_config_variants(self):
        cfg = tiny_config()
        variants = sim.config_variants(cfg, ["tcq_cf", "direct_only"])
        assert [v.scheme for v in variants] == ["tcq_cf", "direct_only"]
        assert all(v.snr_db == cfg.snr_db for v in variants)


class TestCli:
    def test_missing_config_exits_2(self, capsys):
        assert cli.main(["/nonexistent/path.cfg"]) == 2
        assert "cfrelay:" in capsys.readouterr().err

    def test_unknown_scheme_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 72\n")
        assert cli.main([str(cfg), "--scheme", "warp"]) == 2
        assert "unknown scheme" in capsys.readouterr().err

    def test_bad_config_line_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n = 72\nwat = 9\n")
        assert cli.main([str(cfg)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_sweep_writes_outputs(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "n = 72\n"
            "source_rates = 2/3, 2/3, 2/3, 2/3\n"
            "scheme = direct_only\n"
            "snr_db = 16.0\n"
            "trials = 2\n"
        )
        out = tmp_path / "out"
        assert cli.main([str(cfg), "-o", str(out)]) == 0
        assert (out / "sweep.csv").is_file()
        assert (out / "sweep.svg").is_file()
        text = (out / "sweep.csv").read_text()
        assert text.startswith("# cfrelay sweep v1")
        assert "direct_only" in text
        assert "wrote" in capsys.readouterr().out

    def test_seed_and_snr_overrides(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "n = 72\n"
            "source_rates = 2/3, 2/3, 2/3, 2/3\n"
            "scheme = direct_only\n"
            "snr_db = 16.0\n"
            "trials = 2\n"
        )
        out = tmp_path / "out"
        rc = cli.main([str(cfg), "-o", str(out), "--seed", "3",
                       "--snr", "14.0,15.0"])
        assert rc == 0
        text = (out / "sweep.csv").read_text()
        assert "14.0000" in text and "15.0000" in text


class TestDeskScale:
    def test_high_snr_relay_blocks_are_clean(self):
        cfg = tiny_config(
            n=4096,
            source_rates=(Fraction(7, 8), Fraction(13, 16),
                          Fraction(7, 8), Fraction(13, 16)),
            scheme="tcq_cf",
            snr_db=(14.0,),
            trials=50,
            refine_samples=30_000,
            choice_samples=2000,
            table_samples=10_000,
        )
        rows = sim.run_sweep(cfg)
        assert rows[0]["trials"] == 50
        assert rows[0]["ber"] == 0.0
        assert rows[0]["fer"] == 0.0
