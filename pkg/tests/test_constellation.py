import numpy as np
import pytest

from cfrelay import constellation
from cfrelay.constellation import (
    LLR_CLAMP,
    build,
    custom,
    level_llr,
    llrs_to_bit_probs,
    map_bits,
    marginal_level_llrs,
    maxmin_partition,
    min_intra_distance,
    nearest_point,
    subset_points,
    symbol_posterior,
)


def test_build_unit_energy():
    for kind in ("qam16", "psk16"):
        c = build(kind)
        assert c.size == 16
        assert c.num_levels == 4
        assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-12)
        assert len(np.unique(np.round(c.points, 9))) == 16


def test_build_unknown_kind():
    with pytest.raises(ValueError):
        build("qam64")
    with pytest.raises(ValueError):
        build("qam16", labeling="nope")


def test_qam16_level1_subset_distance_expands():
    c = build("qam16")
    full = min_intra_distance(c.points)
    for b in (0, 1):
        sub = subset_points(c, (b,))
        assert sub.shape == (8,)
        assert min_intra_distance(sub) >= full


def test_maxmin_partition_balance():
    c = build("qam16")
    lab = maxmin_partition(c.points)
    assert lab.shape == (16,)
    assert int(lab.sum()) == 8
    d_full = min_intra_distance(c.points)
    for b in (0, 1):
        assert min_intra_distance(c.points[lab == b]) >= d_full


def test_custom_constellation():
    c = custom([1.0, -1.0])
    assert c.size == 2
    assert c.num_levels == 1
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        custom([1.0, -1.0, 1j])


def test_map_bits_roundtrip():
    c = build("qam16")
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, (50, 4)).astype(np.uint8)
    x = map_bits(c, bits)
    idx = nearest_point(c, x)
    assert np.array_equal(c.bit_labels[idx], bits)


def test_symbol_posterior_rows_normalized():
    c = build("psk16")
    rng = np.random.default_rng(1)
    y = rng.normal(size=20) + 1j * rng.normal(size=20)
    post = symbol_posterior(c, y, 1.0, 2.0, 0.5)
    assert post.shape == (20, 16)
    assert np.allclose(post.sum(axis=1), 1.0)
    assert (post >= 0).all()


def test_level_llr_indicator_posterior_hits_clamp():
    c = build("qam16")
    for sym in (0, 5, 15):
        post = np.zeros((1, 16))
        post[0, sym] = 1.0
        known = c.bit_labels[sym][None, :]
        for lvl in range(1, 5):
            llr = level_llr(c, post, lvl, known[:, : lvl - 1])
            want = LLR_CLAMP if c.bit_labels[sym, lvl - 1] == 0 else -LLR_CLAMP
            assert llr[0] == pytest.approx(want)


def test_level_llr_matches_restricted_sum_oracle():
    c = build("qam16")
    rng = np.random.default_rng(3)
    post = rng.random((8, 16))
    known = rng.integers(0, 2, (8, 2)).astype(np.uint8)
    llr = level_llr(c, post, 3, known)
    labels = c.bit_labels
    for r in range(8):
        w0 = w1 = 0.0
        for s in range(16):
            if labels[s, 0] != known[r, 0] or labels[s, 1] != known[r, 1]:
                continue
            if labels[s, 2] == 0:
                w0 += post[r, s]
            else:
                w1 += post[r, s]
        assert llr[r] == pytest.approx(np.log(w0) - np.log(w1), abs=1e-9)


def test_level_llr_rejects_bad_known_shape():
    c = build("qam16")
    post = np.ones((4, 16))
    with pytest.raises(ValueError):
        level_llr(c, post, 3, np.zeros((4, 1), dtype=np.uint8))


def test_marginal_level_llrs_uniform_posterior_is_zero():
    c = build("qam16")
    post = np.full((5, 16), 1 / 16)
    assert np.allclose(marginal_level_llrs(c, post), 0.0)


def test_llrs_to_bit_probs_inverts():
    llrs = np.array([-3.0, 0.0, 3.0, LLR_CLAMP])
    p1 = llrs_to_bit_probs(llrs)
    assert np.allclose(np.log((1 - p1) / p1), llrs, atol=1e-9)


def test_gray_labeling_neighbors_differ_in_one_bit():
    c = build("qam16", labeling="gray")
    pts = c.points
    d = np.abs(pts[:, None] - pts[None, :])
    np.fill_diagonal(d, np.inf)
    dmin = d.min()
    i, j = np.nonzero(np.isclose(d, dmin))
    flips = (c.bit_labels[i] != c.bit_labels[j]).sum(axis=1)
    assert (flips == 1).all()


def test_bit_probs_to_symbol_weights_consistency():
    c = build("psk16")
    rng = np.random.default_rng(5)
    p1 = rng.random((6, 4))
    w = constellation.bit_probs_to_symbol_weights(c, p1)
    labels = c.bit_labels
    for r in range(6):
        for s in range(16):
            want = 1.0
            for lvl in range(4):
                want *= p1[r, lvl] if labels[s, lvl] else 1 - p1[r, lvl]
            assert w[r, s] == pytest.approx(want, rel=1e-12)
