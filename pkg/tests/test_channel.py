import numpy as np
import pytest

from cfrelay.channel import (
    ChannelParams,
    complex_awgn,
    destination_observe,
    relay_observe,
    sic_decompose,
)
from cfrelay.constellation import build, map_bits


def default_params(**kw):
    base = dict(h13=1.0, h12=2.0, h23=11.0, ps=4.0, pr=4.0, n2_var=8.0, n3_var=1.0)
    base.update(kw)
    return ChannelParams(**base)


def random_symbols(rng, n):
    c = build("qam16")
    bits = rng.integers(0, 2, (n, 4)).astype(np.uint8)
    return map_bits(c, bits)


def test_params_validate():
    with pytest.raises(ValueError):
        default_params(ps=0.0)
    with pytest.raises(ValueError):
        default_params(n2_var=-1.0)
    with pytest.raises(ValueError):
        default_params(n3_var=0.0)
    with pytest.raises(ValueError):
        default_params(pr=-0.5)
    with pytest.raises(ValueError):
        default_params(interference_model="h99")


def test_relay_observe_near_noiseless_scales_by_h12():
    p = default_params(n2_var=1e-12, ps=1.0)
    rng = np.random.default_rng(0)
    x1 = random_symbols(rng, 64)
    y2 = relay_observe(p, x1, rng)
    assert np.abs(y2 - 2.0 * x1).max() < 1e-4


def test_relay_observe_noise_variance():
    p = default_params(n2_var=8.0)
    rng = np.random.default_rng(1)
    x1 = np.zeros(100_000, dtype=complex)
    y2 = relay_observe(p, x1, rng)
    var = np.mean(np.abs(y2) ** 2)
    assert abs(var - 8.0) / 8.0 < 0.05


def test_complex_awgn_split_evenly():
    rng = np.random.default_rng(2)
    w = complex_awgn(rng, (200_000,), 2.0)
    assert np.mean(w.real**2) == pytest.approx(1.0, rel=0.05)
    assert np.mean(w.imag**2) == pytest.approx(1.0, rel=0.05)
    assert np.mean(np.abs(w) ** 2) == pytest.approx(2.0, rel=0.05)


def test_destination_observe_noiseless_gains():
    p = default_params(n3_var=1e-12, ps=1.0, pr=1.0)
    rng = np.random.default_rng(3)
    x1 = random_symbols(rng, 32)
    x2 = random_symbols(rng, 32)
    y3 = destination_observe(p, x1, x2, rng)
    assert np.abs(y3 - (x1 + 11.0 * x2)).max() < 1e-4


def test_destination_observe_shape_mismatch():
    p = default_params()
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        destination_observe(p, np.zeros(4, complex), np.zeros(5, complex), rng)


def test_first_block_relay_silent_pure_direct():
    p = default_params(ps=1.0, pr=1.0, n3_var=1e-12)
    rng = np.random.default_rng(5)
    x1 = random_symbols(rng, 16)
    y3 = destination_observe(p, x1, np.zeros_like(x1), rng)
    assert np.abs(y3 - x1).max() < 1e-4


def test_observe_linearity_same_seed():
    p = default_params()
    x1 = random_symbols(np.random.default_rng(6), 128)
    y_a = relay_observe(p, x1, np.random.default_rng(77))
    y_b = relay_observe(p, np.zeros_like(x1), np.random.default_rng(77))
    assert np.allclose(y_a - y_b, p.h12 * np.sqrt(p.ps) * x1)


def test_sic_decompose_noiseless_exact():
    p = default_params(n3_var=1e-12, ps=1.0, pr=1.0)
    rng = np.random.default_rng(7)
    x1 = random_symbols(rng, 16)
    x2 = random_symbols(rng, 16)
    y3 = destination_observe(p, x1, x2, rng)
    resid = sic_decompose(p, y3, x2)
    assert np.abs(resid - x1).max() < 1e-4


def test_y23_noise_var_section_profile():
    # h13 interference model: residual = n3_var + h13^2 * ps
    p = default_params(ps=4.0)
    assert p.y23_noise_var() == pytest.approx(1.0 + 1.0 * 4.0)
    p2 = default_params(ps=4.0, interference_model="h12")
    assert p2.y23_noise_var() == pytest.approx(1.0 + 4.0 * 4.0)


def test_y23_variance_empirical():
    p = default_params(ps=4.0, pr=4.0)
    rng = np.random.default_rng(8)
    n = 200_000
    x1 = random_symbols(rng, n)
    y23 = p.h13 * np.sqrt(p.ps) * x1 + complex_awgn(rng, (n,), p.n3_var)
    var = np.mean(np.abs(y23) ** 2)
    assert abs(var - p.y23_noise_var()) / p.y23_noise_var() < 0.05
