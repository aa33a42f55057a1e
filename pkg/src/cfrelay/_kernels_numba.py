"""Numba twins of the hot kernels.

Same signatures and numerics as _kernels_numpy.py; importing this module
fails cleanly when numba is not installed, which the dispatcher treats as
"use the numpy path".
"""

from __future__ import annotations

import numpy as np
from numba import njit

_LLR_CLAMP = 40.0
_TANH_CAP = 1.0 - 1e-15
_INF = 1e300


@njit(cache=True, nogil=True)
def _spa_update_jit(check_ptr, edge_bit, input_llr, msg_b2c, msg_c2b, checksum_out):
    n = input_llr.shape[0]
    num_checks = check_ptr.shape[0] - 1
    num_edges = edge_bit.shape[0]

    post = np.empty(n)
    for b in range(n):
        post[b] = input_llr[b]
    for e in range(num_edges):
        post[edge_bit[e]] += msg_c2b[e]
    for e in range(num_edges):
        v = post[edge_bit[e]] - msg_c2b[e]
        if v > _LLR_CLAMP:
            v = _LLR_CLAMP
        elif v < -_LLR_CLAMP:
            v = -_LLR_CLAMP
        msg_b2c[e] = v

    max_dc = 0
    for c in range(num_checks):
        d = check_ptr[c + 1] - check_ptr[c]
        if d > max_dc:
            max_dc = d
    t = np.empty(max_dc)
    pref = np.empty(max_dc + 1)
    suff = np.empty(max_dc + 1)
    for c in range(num_checks):
        lo = check_ptr[c]
        d = check_ptr[c + 1] - lo
        for i in range(d):
            t[i] = np.tanh(0.5 * msg_b2c[lo + i])
        pref[0] = 1.0
        for i in range(d):
            pref[i + 1] = pref[i] * t[i]
        suff[d] = 1.0
        for i in range(d - 1, -1, -1):
            suff[i] = suff[i + 1] * t[i]
        for i in range(d):
            x = pref[i] * suff[i + 1]
            if x > _TANH_CAP:
                x = _TANH_CAP
            elif x < -_TANH_CAP:
                x = -_TANH_CAP
            v = 2.0 * np.arctanh(x)
            if v > _LLR_CLAMP:
                v = _LLR_CLAMP
            elif v < -_LLR_CLAMP:
                v = -_LLR_CLAMP
            msg_c2b[lo + i] = v

    for b in range(n):
        checksum_out[b] = 0.0
    for e in range(num_edges):
        checksum_out[edge_bit[e]] += msg_c2b[e]


def spa_update(check_ptr, edge_bit, input_llr, msg_b2c, msg_c2b, checksum_out):
    """One flooding sum-product iteration; see the numpy twin for semantics."""
    _spa_update_jit(check_ptr, edge_bit, input_llr, msg_b2c, msg_c2b, checksum_out)


@njit(cache=True, nogil=True)
def _viterbi_jit(next_state, branch_point, points_re, points_im, y_re, y_im):
    num_states, nc = next_state.shape
    npar = branch_point.shape[2]
    T = y_re.shape[0]
    num_points = points_re.shape[0]

    pm = np.full(num_states, _INF)
    pm[0] = 0.0
    pm_next = np.empty(num_states)
    bp_state = np.empty((T, num_states), dtype=np.int64)
    bp_v = np.empty((T, num_states), dtype=np.int64)
    bp_w = np.empty((T, num_states), dtype=np.int64)
    d = np.empty(num_points)

    for t in range(T):
        for p in range(num_points):
            dr = y_re[t] - points_re[p]
            di = y_im[t] - points_im[p]
            d[p] = dr * dr + di * di
        for s in range(num_states):
            pm_next[s] = _INF
            bp_state[t, s] = -1
        for s in range(num_states):
            base = pm[s]
            if base >= _INF:
                continue
            for v in range(nc):
                wb = 0
                db = d[branch_point[s, v, 0]]
                for w in range(1, npar):
                    dd = d[branch_point[s, v, w]]
                    if dd < db:
                        db = dd
                        wb = w
                ns = next_state[s, v]
                cand = base + db
                if cand < pm_next[ns]:
                    pm_next[ns] = cand
                    bp_state[t, ns] = s
                    bp_v[t, ns] = v
                    bp_w[t, ns] = wb
        for s in range(num_states):
            pm[s] = pm_next[s]

    end = 0
    best = pm[0]
    for s in range(1, num_states):
        if pm[s] < best:
            best = pm[s]
            end = s
    v_seq = np.empty(T, dtype=np.uint8)
    w_seq = np.empty(T, dtype=np.uint8)
    p_seq = np.empty(T, dtype=np.int64)
    s_seq = np.empty(T, dtype=np.int64)
    s = end
    for t in range(T - 1, -1, -1):
        sp = bp_state[t, s]
        v = bp_v[t, s]
        w = bp_w[t, s]
        v_seq[t] = v
        w_seq[t] = w
        p_seq[t] = branch_point[sp, v, w]
        s_seq[t] = sp
        s = sp
    return v_seq, w_seq, p_seq, s_seq, best


def viterbi(next_state, branch_point, points, y):
    """Minimum squared-distance trellis path; see the numpy twin."""
    return _viterbi_jit(
        next_state,
        branch_point,
        np.ascontiguousarray(points.real),
        np.ascontiguousarray(points.imag),
        np.ascontiguousarray(np.asarray(y).real),
        np.ascontiguousarray(np.asarray(y).imag),
    )


@njit(cache=True, nogil=True)
def _bcjr_jit(next_state, branch_point, u_bits, point_prior, bit_p1):
    num_states, nc = next_state.shape
    npar = branch_point.shape[2]
    mt = u_bits.shape[2]
    T = point_prior.shape[0]
    num_points = point_prior.shape[1]

    gammas = np.empty((T, num_states, nc, npar))
    for t in range(T):
        for v in range(nc):
            for w in range(npar):
                g = 1.0
                for j in range(mt):
                    if u_bits[v, w, j] > 0:
                        g *= bit_p1[t, j]
                    else:
                        g *= 1.0 - bit_p1[t, j]
                for s in range(num_states):
                    gammas[t, s, v, w] = g * point_prior[t, branch_point[s, v, w]]

    bit_post = np.zeros((T, mt))
    point_post = np.zeros((T, num_points))

    alpha = np.zeros((T + 1, num_states))
    alpha[0, 0] = 1.0
    for t in range(T):
        for s in range(num_states):
            a = alpha[t, s]
            if a == 0.0:
                continue
            for v in range(nc):
                g = 0.0
                for w in range(npar):
                    g += gammas[t, s, v, w]
                alpha[t + 1, next_state[s, v]] += a * g
        tot = 0.0
        for s in range(num_states):
            tot += alpha[t + 1, s]
        if tot <= 0.0:
            return bit_post, point_post, 1 + t
        for s in range(num_states):
            alpha[t + 1, s] /= tot

    beta = np.empty((T + 1, num_states))
    for s in range(num_states):
        beta[T, s] = 1.0 / num_states
    for t in range(T - 1, -1, -1):
        tot = 0.0
        for s in range(num_states):
            b = 0.0
            for v in range(nc):
                g = 0.0
                for w in range(npar):
                    g += gammas[t, s, v, w]
                b += g * beta[t + 1, next_state[s, v]]
            beta[t, s] = b
            tot += b
        if tot <= 0.0:
            return bit_post, point_post, 1 + t
        for s in range(num_states):
            beta[t, s] /= tot

    for t in range(T):
        tot = 0.0
        for s in range(num_states):
            a = alpha[t, s]
            for v in range(nc):
                bb = beta[t + 1, next_state[s, v]]
                for w in range(npar):
                    tot += a * gammas[t, s, v, w] * bb
        if tot <= 0.0:
            return bit_post, point_post, 1 + t
        for s in range(num_states):
            a = alpha[t, s]
            if a == 0.0:
                continue
            for v in range(nc):
                bb = beta[t + 1, next_state[s, v]]
                for w in range(npar):
                    m = a * gammas[t, s, v, w] * bb / tot
                    if m == 0.0:
                        continue
                    point_post[t, branch_point[s, v, w]] += m
                    for j in range(mt):
                        if u_bits[v, w, j] > 0:
                            bit_post[t, j] += m
    return bit_post, point_post, 0


def bcjr(next_state, branch_point, u_bits, point_prior, bit_p1):
    """Forward-backward posteriors; see the numpy twin for semantics."""
    return _bcjr_jit(next_state, branch_point, u_bits, point_prior, bit_p1)
