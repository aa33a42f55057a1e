"""Brute-force reference implementations shared by unit and acceptance tests.

Everything here trades speed for obviousness: exhaustive path enumeration
and direct summation, no dynamic programming.
"""

import itertools

import numpy as np


def brute_viterbi(trellis, labeling, codebook, y):
    """Exhaustive minimum-distortion path over all input sequences.

    Returns (tilde_bits [T, m], point_idx [T], total distortion).
    """
    T = len(y)
    S, NC, NP = labeling.branch_point.shape
    best = None
    for vs in itertools.product(range(NC), repeat=T):
        for ws in itertools.product(range(NP), repeat=T):
            s = 0
            dist = 0.0
            pts = []
            for t in range(T):
                p = labeling.branch_point[s, vs[t], ws[t]]
                pts.append(p)
                dist += abs(y[t] - codebook.points[p]) ** 2
                s = trellis.next_state[s, vs[t]]
            key = (dist, vs, ws)
            if best is None or key < best[0]:
                best = (key, pts)
    (dist, vs, ws), pts = best
    tilde = np.array(
        [trellis.u_bits[v, w] for v, w in zip(vs, ws)], dtype=np.uint8
    )
    return tilde, np.array(pts), dist


def brute_bcjr(trellis, labeling, prior, bit_p1):
    """Exact posterior bit and point marginals by full path enumeration.

    prior: [T, P] per-step weights on codebook points.
    bit_p1: [T, m] per-step probability that each input bit is 1.
    Returns (bit posterior P1 [T, m], point posterior [T, P]).
    """
    T, P = prior.shape
    S, NC, NP = labeling.branch_point.shape
    m = trellis.num_inputs
    bit1 = np.zeros((T, m))
    point_post = np.zeros((T, P))
    total = 0.0
    for vs in itertools.product(range(NC), repeat=T):
        s = 0
        step_terms = []
        step_sums = np.empty(T)
        for t, v in enumerate(vs):
            pts = labeling.branch_point[s, v]
            q = np.empty(NP)
            for w in range(NP):
                pr = prior[t, pts[w]]
                for j in range(m):
                    pj = bit_p1[t, j]
                    pr *= pj if trellis.u_bits[v, w, j] else 1.0 - pj
                q[w] = pr
            step_terms.append((v, pts, q))
            step_sums[t] = q.sum()
            s = trellis.next_state[s, v]
        weight = step_sums.prod()
        if weight == 0.0:
            continue
        total += weight
        for t, (v, pts, q) in enumerate(step_terms):
            frac = q / step_sums[t]
            np.add.at(point_post[t], pts, weight * frac)
            for w in range(NP):
                for j in range(m):
                    if trellis.u_bits[v, w, j]:
                        bit1[t, j] += weight * frac[w]
    if total == 0.0:
        raise ValueError("all paths have zero weight")
    return bit1 / total, point_post / total


def lloyd_max_mse_oracle(num_levels, grid_points=200_001, span=8.0):
    """Numeric-integration MSE of the Lloyd-Max quantizer for a unit normal.

    Fixed-point iteration on a dense grid; returns (levels, mse).
    """
    x = np.linspace(-span, span, grid_points)
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    levels = np.linspace(-1.5, 1.5, num_levels)
    for _ in range(500):
        edges = 0.5 * (levels[:-1] + levels[1:])
        idx = np.searchsorted(edges, x)
        new = np.array(
            [
                np.trapezoid(pdf[idx == i] * x[idx == i], x[idx == i])
                / np.trapezoid(pdf[idx == i], x[idx == i])
                for i in range(num_levels)
            ]
        )
        if np.abs(new - levels).max() < 1e-12:
            levels = new
            break
        levels = new
    edges = 0.5 * (levels[:-1] + levels[1:])
    idx = np.searchsorted(edges, x)
    err = (x - levels[idx]) ** 2
    mse = np.trapezoid(err * pdf, x)
    return levels, float(mse)


def toy_joint_setup(params=None, table_samples=4000, seed=0, h23=None):
    """Tiny end-to-end joint-decoding instance (BPSK, n=4, 2-state trellis).

    Small enough for exhaustive enumeration, rich enough to exercise every
    message path of the joint decoder.
    """
    from cfrelay import constellation, ldpc, tcq
    from cfrelay.channel import ChannelParams
    from cfrelay.joint_decoder import JointDecoder

    const = constellation.custom([1.0, -1.0])
    relay_const = constellation.custom([1.0, -1.0])
    if params is None:
        params = ChannelParams(
            h13=1.0, h12=2.0, h23=3.0 if h23 is None else h23,
            ps=1.5, pr=1.5, n2_var=0.8, n3_var=0.5,
        )
    src = ldpc.from_check_lists([[0, 1, 2], [1, 2, 3]], 4)
    relay = ldpc.from_check_lists([[0, 1, 4], [1, 2, 5], [2, 3, 6], [0, 3, 7]], 8)
    trellis = tcq.build_trellis(((1, 3),))
    scale = params.h12 * np.sqrt(params.ps)
    cb = tcq.Codebook(
        kind="custom",
        points=scale * np.array([-1.5, -0.5, 0.5, 1.5], dtype=complex),
        scale=1.0,
        shape_params={},
    )
    lab = tcq.assign_labels(trellis, cb)
    model = tcq.QuantizerModel(
        trellis=trellis, labeling=lab, codebook=cb, cell_mode="state"
    )
    tcq.estimate_choice_probs(
        model, const, params, samples_per_symbol=table_samples, seed=seed
    )
    table = tcq.empirical_point_table(
        model, const, params, samples_per_symbol=table_samples, seed=seed,
        block_len=4,
    )
    dec = JointDecoder(
        const, relay_const, model, params,
        [src], [relay], source_layout="per_level", table=table,
    )
    return dec


def toy_transmit(dec, rng):
    """One toy episode; returns (source codeword, y13, y23)."""
    from cfrelay import ldpc, tcq
    from cfrelay.constellation import map_bits
    from cfrelay.joint_decoder import pack_relay_parity

    p = dec.params
    src = dec.source_codes[0]
    info = rng.integers(0, 2, src.k).astype(np.uint8)
    cw = ldpc.encode(src, info)
    x1 = map_bits(dec.const, cw[:, None])

    n = dec.n
    w2 = np.sqrt(p.n2_var / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    y2 = p.h12 * np.sqrt(p.ps) * x1 + w2
    res = tcq.viterbi_quantize(dec.model.trellis, dec.model.labeling,
                               dec.model.codebook, y2)
    flat = res.tilde_bits.T.ravel()
    parities = []
    segs = dec.stream_segments()
    for j, code in enumerate(dec.relay_codes):
        lo, hi = segs[j]
        word = ldpc.encode(code, flat[lo:hi])
        parities.append(word[code.parity_positions])
    packed = pack_relay_parity(parities, dec.relay_const.num_levels, n)
    x2 = map_bits(dec.relay_const, packed)

    w13 = np.sqrt(p.n3_var / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    w23 = np.sqrt(p.n3_var / 2) * (rng.normal(size=n) + 1j * rng.normal(size=n))
    x1_next_bits = rng.integers(0, 2, (n, 1)).astype(np.uint8)
    x1_next = map_bits(dec.const, x1_next_bits)
    y13 = p.h13 * np.sqrt(p.ps) * x1 + w13
    y23 = p.h13 * np.sqrt(p.ps) * x1_next + p.h23 * np.sqrt(p.pr) * x2 + w23
    return cw, y13, y23
