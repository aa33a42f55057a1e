import numpy as np
import pytest
from _oracles import lloyd_max_mse_oracle

from cfrelay import scalar_baseline as sb
from cfrelay import tcq
from cfrelay.channel import ChannelParams
from cfrelay.constellation import build


def test_two_level_symmetric_boundary_at_zero():
    rng = np.random.default_rng(0)
    samples = rng.normal(size=50_000)
    samples = np.concatenate([samples, -samples])
    q = sb.lloyd_max(samples, 2)
    assert abs(q.boundaries[0]) < 1e-9
    assert q.points[0] == pytest.approx(-q.points[1], abs=1e-9)


def test_four_level_gaussian_mse_matches_oracle():
    rng = np.random.default_rng(1)
    samples = rng.normal(size=400_000)
    q = sb.lloyd_max(samples, 4)
    _, recon = sb.quantize(q, samples)
    mse = np.mean((samples - recon) ** 2)
    levels, oracle_mse = lloyd_max_mse_oracle(4)
    assert oracle_mse == pytest.approx(0.1175, rel=0.01)
    assert mse == pytest.approx(oracle_mse, rel=0.05)
    assert np.allclose(np.sort(q.points), levels, atol=0.02)


def test_lloyd_mse_nonincreasing_and_deterministic():
    rng = np.random.default_rng(2)
    samples = rng.normal(size=30_000)
    q1 = sb.lloyd_max(samples, 4)
    q2 = sb.lloyd_max(samples, 4)
    assert np.array_equal(q1.points, q2.points)
    history = [sb.lloyd_max(samples, 4, tol=0.0, max_iters=k).mse for k in (1, 2, 4, 8)]
    assert all(b <= a + 1e-15 for a, b in zip(history, history[1:]))


def test_lloyd_beats_uniform_quantizer():
    rng = np.random.default_rng(3)
    samples = rng.normal(size=200_000)
    q = sb.lloyd_max(samples, 4)
    _, recon = sb.quantize(q, samples)
    lloyd_mse = np.mean((samples - recon) ** 2)
    # uniform 4-level quantizer with step chosen near-optimal for N(0,1)
    best_uniform = np.inf
    for step in np.linspace(0.6, 1.6, 21):
        pts = step * np.array([-1.5, -0.5, 0.5, 1.5])
        edges = step * np.array([-1.0, 0.0, 1.0])
        idx = np.searchsorted(edges, samples)
        mse = np.mean((samples - pts[idx]) ** 2)
        best_uniform = min(best_uniform, mse)
    assert lloyd_mse <= best_uniform


def test_lloyd_validates_input():
    with pytest.raises(ValueError):
        sb.lloyd_max(np.zeros(100), 1)
    with pytest.raises(ValueError):
        sb.lloyd_max(np.array([]), 2)


def test_quantize_fixed_points():
    rng = np.random.default_rng(4)
    q = sb.lloyd_max(rng.normal(size=20_000), 4)
    bits, recon = sb.quantize(q, q.points.copy())
    assert np.array_equal(recon, q.points)
    idx = bits @ (1 << np.arange(bits.shape[1] - 1, -1, -1))
    assert np.array_equal(idx, np.arange(4))


def test_quantize_boundary_tie_to_lower_index():
    rng = np.random.default_rng(5)
    q = sb.lloyd_max(rng.normal(size=20_000), 4)
    bits, _ = sb.quantize(q, q.boundaries.copy())
    idx = bits @ (1 << np.arange(bits.shape[1] - 1, -1, -1))
    assert np.array_equal(idx, np.arange(len(q.boundaries)))


def test_quantize_round_trip_indices():
    rng = np.random.default_rng(6)
    q = sb.lloyd_max(rng.normal(size=20_000), 4)
    y = rng.normal(size=500)
    bits, recon = sb.quantize(q, y)
    idx = bits @ (1 << np.arange(bits.shape[1] - 1, -1, -1))
    assert np.array_equal(recon, q.points[idx])


def test_product_quantizer_grid():
    rng = np.random.default_rng(7)
    y = rng.normal(size=40_000) + 1j * rng.normal(size=40_000)
    pq = sb.design_product_quantizer(y, levels_per_dim=4)
    assert pq.points.shape == (16,)
    # complex points are the outer sum of the two 1-D designs
    re = np.unique(np.round(pq.points.real, 9))
    im = np.unique(np.round(pq.points.imag, 9))
    assert re.size == 4 and im.size == 4


def test_design_relay_scalar_model():
    const = build("qam16")
    p = ChannelParams(h13=1.0, h12=2.0, h23=11.0, ps=4.0, pr=4.0, n2_var=8.0, n3_var=1.0)
    model = sb.design_relay_scalar(const, p, num_samples=20_000, seed=0)
    assert isinstance(model, tcq.QuantizerModel)
    assert model.trellis.num_states == 1
    assert np.allclose(model.choice_probs.sum(axis=1), 1.0)
    table = tcq.point_prob_table(model, const, p)
    assert np.allclose(table.sum(axis=0), 1.0, atol=1e-6)
