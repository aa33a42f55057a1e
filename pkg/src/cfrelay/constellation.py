"""Unit-energy 2-D constellations with multilevel bit labelings.

Symbols are complex numbers with average energy 1; transmit power and channel
gain are applied by the channel layer, so every function here that needs the
received-signal geometry takes (gain, power, noise_var) explicitly.

A constellation with m levels maps m-bit labels to points.  The point array is
ordered so that ``points[i]`` carries the label given by the binary expansion
of ``i`` with level 1 in the most significant position; ``bit_labels`` spells
the same thing out as a [M, m] bit matrix.  Level order is the multistage
decoding order: level 1 is decoded first, and fixing levels 1..i in order
never decreases the intra-subset minimum distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Hard clamp for every log-likelihood ratio produced in this package.
LLR_CLAMP = 40.0

_PAM4 = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)


def _pam_separable_axis(sign: int, mag: int) -> float:
    # sign bit selects the half-axis, magnitude bit the inner/outer point
    amp = 3.0 if mag == 0 else 1.0
    return (2 * sign - 1) * amp / np.sqrt(10.0)


def _pam_gray_axis(b1: int, b2: int) -> float:
    order = {(0, 0): -3.0, (0, 1): -1.0, (1, 1): 1.0, (1, 0): 3.0}
    return order[(b1, b2)] / np.sqrt(10.0)


@dataclass(frozen=True)
class Constellation:
    """Immutable labeled constellation.

    Attributes:
        kind: "qam16" or "psk16".
        points: complex points, index equals packed label (level 1 = MSB).
        num_levels: number of bit levels m.
        labeling: name of the labeling rule used to order the points.
    """

    kind: str
    points: np.ndarray
    num_levels: int
    labeling: str

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def bit_labels(self) -> np.ndarray:
        """[M, m] bit matrix; row i is the label of points[i]."""
        m = self.num_levels
        idx = np.arange(self.size)
        return ((idx[:, None] >> (m - 1 - np.arange(m))[None, :]) & 1).astype(np.uint8)


def build(kind: str, labeling: str | None = None) -> Constellation:
    """Construct a unit-energy constellation with a multilevel labeling.

    Args:
        kind: "qam16" or "psk16".
        labeling: override of the default labeling.  Defaults:
            qam16 -> "separable" (level order I sign, I magnitude, Q sign,
            Q magnitude), psk16 -> "arc" (angular-index bits, MSB first).
            "maxmin" picks labels by recursive max-min set partitioning and
            "gray" gives the bit-interleaved baseline labeling.

    Returns:
        Constellation with points ordered by packed label.
    """
    if kind == "qam16":
        labeling = labeling or "separable"
        pts = _qam16_points(labeling)
    elif kind == "psk16":
        labeling = labeling or "arc"
        pts = _psk16_points(labeling)
    else:
        raise ValueError(f"unknown constellation kind: {kind!r}")
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(kind=kind, points=pts, num_levels=4, labeling=labeling)


def custom(points: np.ndarray, normalize: bool = True) -> Constellation:
    """Constellation from explicit points ordered by packed label.

    The point count must be a power of two; index i carries label i with
    level 1 as the most significant bit.
    """
    pts = np.asarray(points, dtype=np.complex128)
    M = pts.shape[0]
    if M < 2 or M & (M - 1):
        raise ValueError("point count must be a power of two, at least 2")
    if normalize:
        pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return Constellation(
        kind="custom", points=pts, num_levels=int(M.bit_length() - 1), labeling="direct"
    )


def _qam16_points(labeling: str) -> np.ndarray:
    pts = np.empty(16, dtype=np.complex128)
    if labeling == "separable":
        for idx in range(16):
            b = [(idx >> (3 - j)) & 1 for j in range(4)]
            pts[idx] = _pam_separable_axis(b[0], b[1]) + 1j * _pam_separable_axis(b[2], b[3])
    elif labeling == "gray":
        for idx in range(16):
            b = [(idx >> (3 - j)) & 1 for j in range(4)]
            pts[idx] = _pam_gray_axis(b[0], b[1]) + 1j * _pam_gray_axis(b[2], b[3])
    elif labeling == "maxmin":
        grid = np.array([a + 1j * b for b in _PAM4[::-1] for a in _PAM4])
        pts = _maxmin_labeled(grid, 4)
    else:
        raise ValueError(f"unknown qam16 labeling: {labeling!r}")
    return pts


def _psk16_points(labeling: str) -> np.ndarray:
    ring = np.exp(2j * np.pi * np.arange(16) / 16)
    if labeling == "arc":
        return ring.copy()
    if labeling == "gray":
        gray = np.arange(16) ^ (np.arange(16) >> 1)
        pts = np.empty(16, dtype=np.complex128)
        pts[gray] = ring
        return pts
    if labeling == "maxmin":
        return _maxmin_labeled(ring, 4)
    raise ValueError(f"unknown psk16 labeling: {labeling!r}")


def maxmin_partition(points: np.ndarray) -> np.ndarray:
    """Split points into two equal halves maximizing the min intra-half distance.

    Exact: the bottleneck distance is found by descending through candidate
    thresholds; a threshold is feasible when the graph of closer-than-threshold
    pairs is bipartite and its components can be balanced into equal halves.
    Ties are broken deterministically (half 0 contains point 0, components
    resolved in index order).

    Returns:
        uint8 array of half assignments (0 or 1) per point.
    """
    n = points.shape[0]
    if n % 2:
        raise ValueError("maxmin_partition needs an even number of points")
    if n == 2:
        return np.array([0, 1], dtype=np.uint8)
    d = np.abs(points[:, None] - points[None, :])
    cand = np.unique(d[np.triu_indices(n, k=1)])
    # try the largest bottleneck first; theta = smallest distance always works
    for theta in cand[::-1]:
        assign = _balanced_bipartition(d < theta - 1e-12, n)
        if assign is not None:
            if assign[0] == 1:
                assign = 1 - assign
            return assign.astype(np.uint8)
    raise RuntimeError("no feasible split found")  # unreachable


def _balanced_bipartition(conflict: np.ndarray, n: int) -> np.ndarray | None:
    """2-color the conflict graph with equal color counts, or None."""
    np.fill_diagonal(conflict, False)
    color = np.full(n, -1, dtype=np.int64)
    comps: list[tuple[np.ndarray, int, int]] = []
    for start in range(n):
        if color[start] >= 0:
            continue
        stack = [start]
        color[start] = 0
        members = [start]
        ok = True
        while stack:
            u = stack.pop()
            for v in np.nonzero(conflict[u])[0]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    members.append(int(v))
                    stack.append(int(v))
                elif color[v] == color[u]:
                    ok = False
        if not ok:
            return None
        mem = np.array(sorted(members))
        comps.append((mem, int(np.sum(color[mem] == 0)), int(np.sum(color[mem] == 1))))
    # choose a flip per component so color-0 totals n/2; DP over components
    target = n // 2
    reach = {0: []}
    for mem, c0, c1 in comps:
        nxt: dict[int, list] = {}
        for tot, flips in reach.items():
            for flip, add in ((0, c0), (1, c1)):
                t = tot + add
                if t <= target and t not in nxt:
                    nxt[t] = flips + [flip]
        reach = nxt
    if target not in reach:
        return None
    out = np.empty(n, dtype=np.int64)
    for (mem, _, _), flip in zip(comps, reach[target]):
        out[mem] = color[mem] ^ flip
    return out


def _maxmin_labeled(points: np.ndarray, num_levels: int) -> np.ndarray:
    """Order points so index bits follow recursive max-min partitioning."""
    order = np.zeros(points.shape[0], dtype=np.int64)
    groups = [np.arange(points.shape[0])]
    for _ in range(num_levels):
        nxt = []
        for g in groups:
            half = maxmin_partition(points[g])
            order[g] = 2 * order[g] + half
            nxt.append(g[half == 0])
            nxt.append(g[half == 1])
        groups = nxt
    out = np.empty_like(points)
    out[order] = points
    return out


def map_bits(c: Constellation, bits: np.ndarray) -> np.ndarray:
    """Map [N, m] label bits (level 1 first) to complex symbols."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != c.num_levels:
        raise ValueError(f"bits must be [N, {c.num_levels}]")
    weights = 1 << (c.num_levels - 1 - np.arange(c.num_levels))
    idx = (bits.astype(np.int64) * weights).sum(axis=1)
    return c.points[idx]


def nearest_point(c: Constellation, y: np.ndarray) -> np.ndarray:
    """Index of the nearest constellation point for each sample."""
    return np.argmin(np.abs(np.asarray(y)[..., None] - c.points), axis=-1)


def symbol_posterior(
    c: Constellation, y: np.ndarray, gain: float, power: float, noise_var: float
) -> np.ndarray:
    """Per-sample posterior over symbols under equiprobable signaling.

    The received samples are modeled as gain * sqrt(power) * point plus
    circular Gaussian noise of total variance noise_var.

    Returns:
        [N, M] rows summing to 1.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.complex128))
    mean = gain * np.sqrt(power) * c.points
    e = -np.abs(y[:, None] - mean[None, :]) ** 2 / noise_var
    e -= e.max(axis=1, keepdims=True)
    w = np.exp(e)
    return w / w.sum(axis=1, keepdims=True)


def _llr_from_weights(w0: np.ndarray, w1: np.ndarray) -> np.ndarray:
    tiny = np.finfo(np.float64).tiny
    llr = np.log(np.maximum(w0, tiny)) - np.log(np.maximum(w1, tiny))
    return np.clip(llr, -LLR_CLAMP, LLR_CLAMP)


def level_llr(
    c: Constellation, posterior: np.ndarray, level: int, known_bits: np.ndarray
) -> np.ndarray:
    """LLR of the given level's bit conditioned on the lower-level decisions.

    Args:
        posterior: [N, M] symbol weights (need not be normalized).
        level: 1-based level index.
        known_bits: [N, level-1] hard bits for levels 1..level-1.

    Returns:
        [N] LLRs, positive meaning bit 0, clamped to +-LLR_CLAMP.
    """
    posterior = np.atleast_2d(posterior)
    known_bits = np.asarray(known_bits, dtype=np.uint8)
    if known_bits.ndim == 1:
        known_bits = np.broadcast_to(known_bits, (posterior.shape[0], known_bits.shape[0]))
    if known_bits.shape != (posterior.shape[0], level - 1):
        raise ValueError(f"known_bits must be [N, {level - 1}]")
    labels = c.bit_labels
    match = np.ones((posterior.shape[0], c.size), dtype=bool)
    for j in range(level - 1):
        match &= labels[None, :, j] == known_bits[:, j, None]
    sel = posterior * match
    bit = labels[:, level - 1]
    w0 = (sel * (bit == 0)).sum(axis=1)
    w1 = (sel * (bit == 1)).sum(axis=1)
    return _llr_from_weights(w0, w1)


def marginal_level_llrs(c: Constellation, posterior: np.ndarray) -> np.ndarray:
    """[N, m] per-level LLRs with the other levels marginalized out."""
    posterior = np.atleast_2d(posterior)
    labels = c.bit_labels
    out = np.empty((posterior.shape[0], c.num_levels))
    for j in range(c.num_levels):
        bit = labels[:, j]
        w0 = posterior[:, bit == 0].sum(axis=1)
        w1 = posterior[:, bit == 1].sum(axis=1)
        out[:, j] = _llr_from_weights(w0, w1)
    return out


def bit_probs_to_symbol_weights(c: Constellation, p_one: np.ndarray) -> np.ndarray:
    """Combine per-level bit probabilities into symbol weights.

    Args:
        p_one: [N, m] probability that each level's bit equals 1.

    Returns:
        [N, M] rows summing to 1 (levels treated as independent).
    """
    p_one = np.atleast_2d(np.asarray(p_one, dtype=np.float64))
    labels = c.bit_labels.astype(np.float64)
    w = np.ones((p_one.shape[0], c.size))
    for j in range(c.num_levels):
        pj = p_one[:, j : j + 1]
        w *= np.where(labels[None, :, j] > 0.5, pj, 1.0 - pj)
    s = w.sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return w / s


def llrs_to_bit_probs(llrs: np.ndarray) -> np.ndarray:
    """P(bit = 1) from LLRs in the log(P0/P1) convention."""
    return 1.0 / (1.0 + np.exp(np.clip(llrs, -LLR_CLAMP, LLR_CLAMP)))


def min_intra_distance(points: np.ndarray) -> float:
    """Smallest pairwise distance; inf for singletons."""
    if points.shape[0] < 2:
        return np.inf
    d = np.abs(points[:, None] - points[None, :])
    return float(d[np.triu_indices(points.shape[0], k=1)].min())


def subset_points(c: Constellation, prefix_bits: tuple[int, ...]) -> np.ndarray:
    """Points whose labels start with the given level prefix."""
    labels = c.bit_labels
    mask = np.ones(c.size, dtype=bool)
    for j, b in enumerate(prefix_bits):
        mask &= labels[:, j] == b
    return c.points[mask]
