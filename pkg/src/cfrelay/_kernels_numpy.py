"""Pure-numpy reference implementations of the hot kernels.

These are the fallback path selected by CFRELAY_DISABLE_NUMBA=1 (or when
numba is unavailable) and the ground truth the numba twins are tested
against.  Signatures and numerical behavior must stay aligned with
_kernels_numba.py.
"""

from __future__ import annotations

import numpy as np

_LLR_CLAMP = 40.0
_TANH_CAP = 1.0 - 1e-15
_INF = 1e300


def spa_update(
    check_ptr: np.ndarray,
    edge_bit: np.ndarray,
    input_llr: np.ndarray,
    msg_b2c: np.ndarray,
    msg_c2b: np.ndarray,
    checksum_out: np.ndarray,
) -> None:
    """One flooding sum-product iteration (bit-to-check then check-to-bit).

    Edges are grouped by check; edge_bit maps each edge to its bit.  Messages
    are updated in place; checksum_out receives the per-bit sum of the fresh
    check-to-bit messages (the extrinsic part that excludes input_llr).
    """
    n = input_llr.shape[0]
    num_checks = check_ptr.shape[0] - 1
    post = input_llr + np.bincount(edge_bit, weights=msg_c2b, minlength=n)
    np.clip(post[edge_bit] - msg_c2b, -_LLR_CLAMP, _LLR_CLAMP, out=msg_b2c)

    t = np.tanh(0.5 * msg_b2c)
    deg = np.diff(check_ptr)
    max_dc = int(deg.max()) if num_checks else 0
    cols = np.arange(max_dc)
    idx = np.minimum(check_ptr[:-1, None] + cols[None, :], len(edge_bit) - 1)
    mask = cols[None, :] < deg[:, None]
    tp = np.where(mask, t[idx], 1.0)
    pref = np.ones_like(tp)
    pref[:, 1:] = np.cumprod(tp[:, :-1], axis=1)
    suff = np.ones_like(tp)
    suff[:, :-1] = np.cumprod(tp[:, :0:-1], axis=1)[:, ::-1]
    excl = np.clip(pref * suff, -_TANH_CAP, _TANH_CAP)
    out = np.clip(2.0 * np.arctanh(excl), -_LLR_CLAMP, _LLR_CLAMP)
    msg_c2b[idx[mask]] = out[mask]

    checksum_out[:] = np.bincount(edge_bit, weights=msg_c2b, minlength=n)


def viterbi(
    next_state: np.ndarray,
    branch_point: np.ndarray,
    points: np.ndarray,
    y: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Minimum squared-distance path through the quantizer trellis.

    Starts in state 0, leaves the final state free.  Ties are broken toward
    the smaller origin state, then the smaller coded input, then the smaller
    uncoded input (the iteration order below).

    Returns:
        (coded inputs, uncoded inputs, chosen point indices, state before
        each step, total distortion).
    """
    num_states, nc = next_state.shape
    npar = branch_point.shape[2]
    T = y.shape[0]
    pm = np.full(num_states, _INF)
    pm[0] = 0.0
    bp_flat = np.empty((T, num_states), dtype=np.int64)
    wbest_all = np.empty((T, num_states, nc), dtype=np.int64)

    flat_ns = next_state.ravel()
    incoming = [np.nonzero(flat_ns == s)[0] for s in range(num_states)]

    y = np.asarray(y)
    for t in range(T):
        dr = y[t].real - points.real
        di = y[t].imag - points.imag
        d = dr * dr + di * di
        dp = d[branch_point]
        wbest = np.argmin(dp, axis=2)
        wbest_all[t] = wbest
        dbranch = np.take_along_axis(dp, wbest[:, :, None], axis=2)[:, :, 0]
        cand = (pm[:, None] + dbranch).ravel()
        pm = np.full(num_states, _INF)
        for s in range(num_states):
            if incoming[s].size == 0:
                bp_flat[t, s] = -1
                continue
            vals = cand[incoming[s]]
            k = int(np.argmin(vals))
            pm[s] = vals[k]
            bp_flat[t, s] = incoming[s][k]

    end = int(np.argmin(pm))
    total = float(pm[end])
    v_seq = np.empty(T, dtype=np.uint8)
    w_seq = np.empty(T, dtype=np.uint8)
    p_seq = np.empty(T, dtype=np.int64)
    s_seq = np.empty(T, dtype=np.int64)
    s = end
    for t in range(T - 1, -1, -1):
        flat = bp_flat[t, s]
        s_prev, v = divmod(int(flat), nc)
        w = int(wbest_all[t, s_prev, v])
        v_seq[t] = v
        w_seq[t] = w
        p_seq[t] = branch_point[s_prev, v, w]
        s_seq[t] = s_prev
        s = s_prev
    return v_seq, w_seq, p_seq, s_seq, total


def bcjr(
    next_state: np.ndarray,
    branch_point: np.ndarray,
    u_bits: np.ndarray,
    point_prior: np.ndarray,
    bit_p1: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Forward-backward posteriors over the quantizer trellis.

    Args:
        u_bits: [NC, NP, mt] input-bit labels of each branch.
        point_prior: [T, P] per-step weights on codebook points.
        bit_p1: [T, mt] prior probability 1 for each input bit.

    Returns:
        (bit posterior P(bit=1) [T, mt], point posterior [T, P], status);
        status is 0 on success or 1 + t for the first step whose branch
        weights all vanished.
    """
    num_states, nc = next_state.shape
    npar = branch_point.shape[2]
    mt = u_bits.shape[2]
    T, num_points = point_prior.shape

    gb = np.empty((T, nc, npar))
    for t in range(T):
        g = np.ones((nc, npar))
        for j in range(mt):
            p1 = bit_p1[t, j]
            g = g * np.where(u_bits[:, :, j] > 0, p1, 1.0 - p1)
        gb[t] = g

    gammas = point_prior[:, branch_point] * gb[:, None, :, :]

    alpha = np.zeros((T + 1, num_states))
    alpha[0, 0] = 1.0
    for t in range(T):
        contrib = (alpha[t][:, None] * gammas[t].sum(axis=2)).ravel()
        a = np.bincount(next_state.ravel(), weights=contrib, minlength=num_states)
        tot = a.sum()
        if tot <= 0.0:
            return np.zeros((T, mt)), np.zeros((T, num_points)), 1 + t
        alpha[t + 1] = a / tot

    beta = np.empty((T + 1, num_states))
    beta[T] = 1.0 / num_states
    for t in range(T - 1, -1, -1):
        b = (gammas[t].sum(axis=2) * beta[t + 1][next_state]).sum(axis=1)
        tot = b.sum()
        if tot <= 0.0:
            return np.zeros((T, mt)), np.zeros((T, num_points)), 1 + t
        beta[t] = b / tot

    bit_post = np.empty((T, mt))
    point_post = np.zeros((T, num_points))
    for t in range(T):
        mass = alpha[t][:, None, None] * gammas[t] * beta[t + 1][next_state][:, :, None]
        tot = mass.sum()
        if tot <= 0.0:
            return np.zeros((T, mt)), np.zeros((T, num_points)), 1 + t
        mass = mass / tot
        point_post[t] = np.bincount(
            branch_point.ravel(), weights=mass.ravel(), minlength=num_points
        )
        branch_mass = mass.sum(axis=0)
        for j in range(mt):
            bit_post[t, j] = branch_mass[u_bits[:, :, j] > 0].sum()
    return bit_post, point_post, 0
