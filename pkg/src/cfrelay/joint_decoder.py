"""Destination-side joint iterative decoder.

Three soft blocks exchange extrinsic information: the per-level source
codes (sum-product), the per-stream relay codes (sum-product), and the
quantizer trellis (forward-backward), bridged by the demapper on the
interference-free observation and by the reconstruction-point table in
both directions.  One outer iteration runs source codes, forward bridge,
relay codes, backward bridge, in that order; decoding finishes with
multistage hard decisions level by level.

Messages between constellation-facing blocks travel as full symbol or
point distributions; they become bit LLRs only at code boundaries.  Every
hand-off is extrinsic: no block receives its own output back within an
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ldpc
from .channel import ChannelParams
from .constellation import (
    LLR_CLAMP,
    Constellation,
    level_llr,
    llrs_to_bit_probs,
    marginal_level_llrs,
    symbol_posterior,
)
from .ldpc import LdpcCode
from .tcq import QuantizerModel, bcjr_soft, point_prob_table

_TINY = np.finfo(np.float64).tiny


def pack_relay_parity(parities: list[np.ndarray], num_levels: int, n: int) -> np.ndarray:
    """Lay relay-code parity streams onto relay symbol labels.

    Parity bits are concatenated in code order and filled level-major, so
    with one rate-1/2 code per description stream, stream j lands on label
    level j of every symbol.  Returns [n, num_levels] label bits.
    """
    flat = np.concatenate([np.asarray(p, dtype=np.uint8).ravel() for p in parities])
    if flat.size != num_levels * n:
        raise ValueError(
            f"parity bits {flat.size} do not fill {num_levels} levels x {n} symbols"
        )
    return flat.reshape(num_levels, n).T.copy()


def split_info_segments(total_bits: np.ndarray, lengths: list[int]) -> list[np.ndarray]:
    """Cut the concatenated description stream into per-code info segments."""
    total_bits = np.asarray(total_bits).ravel()
    if total_bits.size != sum(lengths):
        raise ValueError("stream length does not match code info lengths")
    out = []
    pos = 0
    for L in lengths:
        out.append(total_bits[pos : pos + L])
        pos += L
    return out


class JointDecoder:
    """Static context of one decoding setup: codes, quantizer, channel."""

    def __init__(
        self,
        const: Constellation,
        relay_const: Constellation,
        model: QuantizerModel,
        params: ChannelParams,
        source_codes: list[LdpcCode],
        relay_codes: list[LdpcCode],
        source_layout: str = "auto",
        table: np.ndarray | None = None,
    ):
        self.const = const
        self.relay_const = relay_const
        self.model = model
        self.params = params
        self.source_codes = list(source_codes)
        self.relay_codes = list(relay_codes)

        m = const.num_levels
        if source_layout == "auto":
            source_layout = "per_level" if len(self.source_codes) > 1 else "round_robin"
        if source_layout == "per_level":
            if len(self.source_codes) != m:
                raise ValueError(
                    f"need {m} source codes, got {len(self.source_codes)}"
                )
            lens = {c.n for c in self.source_codes}
            if len(lens) != 1:
                raise ValueError("source codes must share one block length")
            self.n = self.source_codes[0].n
            self.src_lvl_idx = [np.full(self.n, i, dtype=np.int64) for i in range(m)]
            self.src_sym_idx = [np.arange(self.n, dtype=np.int64) for _ in range(m)]
        elif source_layout == "round_robin":
            if len(self.source_codes) != 1:
                raise ValueError("round_robin layout uses exactly one source code")
            code = self.source_codes[0]
            if code.n % m:
                raise ValueError(
                    f"code length {code.n} does not split over {m} levels"
                )
            self.n = code.n // m
            g = np.arange(code.n, dtype=np.int64)
            self.src_lvl_idx = [g % m]
            self.src_sym_idx = [g // m]
        else:
            raise ValueError(f"unknown source layout: {source_layout!r}")
        self.source_layout = source_layout
        mt = model.trellis.num_inputs
        info_total = sum(len(c.info_positions) for c in self.relay_codes)
        if info_total != mt * self.n:
            raise ValueError(
                f"relay info capacity {info_total} != {mt} streams x {self.n} steps"
            )
        parity_total = sum(len(c.parity_positions) for c in self.relay_codes)
        if parity_total != relay_const.num_levels * self.n:
            raise ValueError(
                f"relay parity {parity_total} does not fill the relay block "
                f"({relay_const.num_levels} x {self.n})"
            )
        if table is None:
            self.table = point_prob_table(model, const, params)  # [P, M]
        else:
            table = np.asarray(table, dtype=np.float64)
            expected = (len(model.codebook.points), const.size)
            if table.shape != expected:
                raise ValueError(f"table shape {table.shape} != {expected}")
            if not np.allclose(table.sum(axis=0), 1.0, atol=1e-6):
                raise ValueError("table columns must sum to 1")
            self.table = table

    # stream layout helpers: description bits concatenate stream-major
    def stream_segments(self) -> list[tuple[int, int]]:
        """(start, stop) in the concatenated description stream per code."""
        out = []
        pos = 0
        for c in self.relay_codes:
            L = len(c.info_positions)
            out.append((pos, pos + L))
            pos += L
        return out


@dataclass
class JointState:
    """Mutable per-block decoder state."""

    C: np.ndarray                 # [n, M] direct-branch symbol posterior
    relay_ch_llrs: list[np.ndarray]
    L_relay: np.ndarray           # [n, M] symbol message from the relay side
    src_states: list[ldpc.DecoderState]
    relay_states: list[ldpc.DecoderState]
    src_ext: np.ndarray           # [m, n] source-code extrinsics
    relay_ext: np.ndarray         # [n, mt] relay-code extrinsics, stream layout
    last_post: np.ndarray         # [m, n] source posteriors from the last pass
    iters: int = 0
    point_prior: np.ndarray | None = field(default=None, repr=False)


def init(decoder: JointDecoder, y13: np.ndarray, y23: np.ndarray) -> JointState:
    """Fill channel-side messages from the two observation branches.

    y13 is the interference-free branch (after subtracting the re-encoded
    relay word of the block before); y23 is the raw next-block observation
    carrying the relay word under residual source interference.
    """
    y13 = np.asarray(y13, dtype=np.complex128).ravel()
    y23 = np.asarray(y23, dtype=np.complex128).ravel()
    n = decoder.n
    if y13.shape != (n,) or y23.shape != (n,):
        raise ValueError(f"observations must have length {n}")
    p = decoder.params
    C = symbol_posterior(decoder.const, y13, p.h13, p.ps, p.n3_var)
    Cr = symbol_posterior(
        decoder.relay_const, y23, p.h23, max(p.pr, _TINY), p.y23_noise_var()
    )
    lvl = marginal_level_llrs(decoder.relay_const, Cr)  # [n, m_r]

    relay_ch = []
    offset = 0
    for code in decoder.relay_codes:
        llrs = np.zeros(code.n)
        npar = len(code.parity_positions)
        g = offset + np.arange(npar)
        llrs[code.parity_positions] = lvl[g % n, g // n]
        relay_ch.append(llrs)
        offset += npar

    m = decoder.const.num_levels
    mt = decoder.model.trellis.num_inputs
    state = JointState(
        C=C,
        relay_ch_llrs=relay_ch,
        L_relay=np.full((n, decoder.const.size), 1.0 / decoder.const.size),
        src_states=[ldpc.new_state(c) for c in decoder.source_codes],
        relay_states=[ldpc.new_state(c) for c in decoder.relay_codes],
        src_ext=np.zeros((m, n)),
        relay_ext=np.zeros((n, mt)),
        last_post=np.zeros((m, n)),
    )
    labels = decoder.const.bit_labels
    for i in range(m):
        b = labels[:, i]
        w0 = (C * (b == 0)).sum(axis=1)
        w1 = (C * (b == 1)).sum(axis=1)
        state.last_post[i] = np.clip(
            np.log(np.maximum(w0, _TINY)) - np.log(np.maximum(w1, _TINY)),
            -LLR_CLAMP,
            LLR_CLAMP,
        )
    return state


def _level_factors(const: Constellation, ext: np.ndarray) -> np.ndarray:
    """Per-level symbol factors from extrinsic LLRs, shape [m, n, M]."""
    p1 = llrs_to_bit_probs(ext)  # [m, n]
    labels = const.bit_labels  # [M, m]
    m = const.num_levels
    out = np.empty((m, ext.shape[1], const.size))
    for j in range(m):
        bj = labels[:, j][None, :]
        out[j] = np.where(bj > 0, p1[j][:, None], 1.0 - p1[j][:, None])
    return out


def _normalize_rows(w: np.ndarray) -> np.ndarray:
    s = w.sum(axis=1, keepdims=True)
    s = np.where(s > 0, s, 1.0)
    return w / s


def outer_iteration(decoder: JointDecoder, state: JointState) -> JointState:
    """One pass of the five-step schedule; mutates and returns the state."""
    const = decoder.const
    m = const.num_levels
    n = decoder.n
    labels = const.bit_labels

    # (1) source codes: demapper message excludes each level's own extrinsic
    factors = _level_factors(const, state.src_ext)
    base = state.C * state.L_relay
    mus = np.empty((m, n))
    for i in range(m):
        W = base.copy()
        for j in range(m):
            if j != i:
                W *= factors[j]
        b = labels[:, i]
        w0 = (W * (b == 0)).sum(axis=1)
        w1 = (W * (b == 1)).sum(axis=1)
        mus[i] = np.clip(
            np.log(np.maximum(w0, _TINY)) - np.log(np.maximum(w1, _TINY)),
            -LLR_CLAMP,
            LLR_CLAMP,
        )
    for c, code in enumerate(decoder.source_codes):
        li, si = decoder.src_lvl_idx[c], decoder.src_sym_idx[c]
        zeros = np.zeros(code.n)
        priors = mus[li, si]
        ext = ldpc.spa_step(code, state.src_states[c], zeros, extrinsic_priors=priors)
        state.src_ext[li, si] = ext
        state.last_post[li, si] = ldpc.posterior_llrs(state.src_states[c], zeros, priors)

    # (2) symbol belief toward the relay side: everything except L_relay
    factors = _level_factors(const, state.src_ext)
    q = state.C.copy()
    for j in range(m):
        q *= factors[j]
    q = _normalize_rows(q)
    prior = q @ decoder.table.T  # [n, P]
    prior = _normalize_rows(prior)
    state.point_prior = prior

    # (3) forward bridge: trellis posteriors on the description bits
    try:
        bit_post, _ = bcjr_soft(
            decoder.model.trellis, decoder.model.labeling, prior, state.relay_ext
        )
    except ValueError as e:
        raise RuntimeError(f"forward trellis pass failed: {e}") from None
    tilde_ext = np.clip(bit_post - state.relay_ext, -LLR_CLAMP, LLR_CLAMP)

    # (4) relay codes: description extrinsics as priors on info positions
    flat = tilde_ext.T.ravel()  # stream-major concatenation
    segs = decoder.stream_segments()
    new_relay_ext = np.empty_like(flat)
    for j, code in enumerate(decoder.relay_codes):
        lo, hi = segs[j]
        priors = np.zeros(code.n)
        priors[code.info_positions] = flat[lo:hi]
        ext = ldpc.spa_step(
            code, state.relay_states[j], state.relay_ch_llrs[j], priors
        )
        new_relay_ext[lo:hi] = ext[code.info_positions]
    mt = decoder.model.trellis.num_inputs
    state.relay_ext = new_relay_ext.reshape(mt, n).T.copy()

    # (5) backward bridge: point posteriors, Bayes-inverted to a symbol message
    try:
        _, point_post = bcjr_soft(
            decoder.model.trellis, decoder.model.labeling, prior, state.relay_ext
        )
    except ValueError as e:
        raise RuntimeError(f"backward trellis pass failed: {e}") from None
    ext_point = point_post / np.maximum(prior, _TINY)
    ext_point = _normalize_rows(ext_point)
    L = ext_point @ decoder.table  # [n, M], uniform symbol prior
    state.L_relay = _normalize_rows(np.maximum(L, _TINY))

    state.iters += 1
    if not (
        np.isfinite(state.src_ext).all()
        and np.isfinite(state.relay_ext).all()
        and np.isfinite(state.L_relay).all()
    ):
        raise RuntimeError(f"non-finite message after outer iteration {state.iters}")
    return state


@dataclass(frozen=True)
class JointResult:
    level_codewords: np.ndarray        # [m, n] hard bits on the label grid
    level_info: tuple[np.ndarray, ...]  # one entry per source code
    converged: np.ndarray              # per-code zero-syndrome flags
    outer_iters: int
    outer_converged: bool


def _source_syndromes_clear(decoder: JointDecoder, state: JointState) -> bool:
    for c, code in enumerate(decoder.source_codes):
        hard = (state.last_post[decoder.src_lvl_idx[c], decoder.src_sym_idx[c]] < 0)
        if ldpc.syndrome(code, hard.astype(np.uint8)).any():
            return False
    return True


def run(
    decoder: JointDecoder,
    state: JointState,
    max_outer_iters: int = 60,
    finish_iters: int = 20,
) -> JointResult:
    """Iterate until every source syndrome clears, then finish the levels.

    With per-level codes the finish is multistage: levels decode in order,
    each level's demapper LLRs conditioned on the hard decisions of the
    levels below, with a short standalone sum-product decode per level.
    With a single round-robin code the finish is one parallel-demap decode
    on the marginal level LLRs.
    """
    if max_outer_iters < 1:
        raise ValueError("max_outer_iters must be at least 1")
    outer_converged = False
    while state.iters < max_outer_iters:
        outer_iteration(decoder, state)
        if _source_syndromes_clear(decoder, state):
            outer_converged = True
            break

    const = decoder.const
    m = const.num_levels
    n = decoder.n
    W = state.C * state.L_relay
    codewords = np.empty((m, n), dtype=np.uint8)
    infos = []
    if decoder.source_layout == "per_level":
        known = np.zeros((n, 0), dtype=np.uint8)
        conv = np.zeros(m, dtype=bool)
        for i in range(m):
            llrs = level_llr(const, W, i + 1, known)
            hard, ok, _ = ldpc.decode(
                decoder.source_codes[i], llrs, max_iters=finish_iters
            )
            codewords[i] = hard
            conv[i] = ok
            infos.append(hard[decoder.source_codes[i].info_positions].copy())
            known = np.concatenate([known, hard[:, None]], axis=1)
    else:
        code = decoder.source_codes[0]
        li, si = decoder.src_lvl_idx[0], decoder.src_sym_idx[0]
        lvl = marginal_level_llrs(const, _normalize_rows(W))  # [n, m]
        hard, ok, _ = ldpc.decode(code, lvl[si, li], max_iters=finish_iters)
        codewords[li, si] = hard
        conv = np.array([ok])
        infos.append(hard[code.info_positions].copy())
    return JointResult(
        level_codewords=codewords,
        level_info=tuple(infos),
        converged=conv,
        outer_iters=state.iters,
        outer_converged=outer_converged,
    )


# ---------------------------------------------------------------------------
# exact reference for toy instances


def map_rule_reference(
    candidate_bits: np.ndarray, joint_weights: np.ndarray
) -> np.ndarray:
    """Bitwise MAP decisions from an enumerated joint distribution.

    Args:
        candidate_bits: [N, nb] source bit patterns of the enumerated
            candidates (nb <= 12, N <= 4096: toy instances only).
        joint_weights: [N] nonnegative joint densities, any scale.

    Returns:
        [nb] hard decisions maximizing each bit's marginal.
    """
    cb = np.asarray(candidate_bits, dtype=np.uint8)
    w = np.asarray(joint_weights, dtype=np.float64)
    if cb.ndim != 2 or w.shape != (cb.shape[0],):
        raise ValueError("candidate_bits must be [N, nb] with matching weights")
    if cb.shape[1] > 12 or cb.shape[0] > 4096:
        raise ValueError("instance too large for exhaustive reference")
    if w.sum() <= 0:
        raise ValueError("joint weights sum to zero")
    p1 = (w[:, None] * cb).sum(axis=0) / w.sum()
    return (p1 > 0.5).astype(np.uint8)


def enumerate_toy_joint(
    decoder: JointDecoder, y13: np.ndarray, y23: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive joint weights over source codeword combinations.

    Enumerates every combination of per-level source codewords and every
    description-bit sequence; scores the direct branch, the per-step point
    table, the relay-code membership of the description, and the relay
    branch of the resulting relay word.  Only usable on toy geometry
    (trellis length <= 4, total source bits <= 12).

    Returns:
        (candidate_bits [N, nb] with per-level codewords concatenated,
         joint_weights [N]).
    """
    n = decoder.n
    mt = decoder.model.trellis.num_inputs
    m = decoder.const.num_levels
    if n > 4:
        raise ValueError("toy reference limited to trellis length <= 4")
    total_bits = m * n
    if total_bits > 12:
        raise ValueError("toy reference limited to 12 source bits")
    if decoder.relay_const.num_levels != 1:
        raise ValueError("toy reference needs a binary relay constellation")

    from .tcq import tilde_to_points

    state = init(decoder, y13, y23)
    level_words = []
    for code in decoder.source_codes:
        k = code.k
        words = np.array(
            [ldpc.encode(code, np.array(list(np.binary_repr(i, k)), dtype=np.uint8))
             for i in range(1 << k)],
            dtype=np.uint8,
        )
        level_words.append(words)

    combos = [np.zeros((1, 0), dtype=np.uint8)]
    for words in level_words:
        prev = combos[-1]
        a = np.repeat(prev, words.shape[0], axis=0)
        b = np.tile(words, (prev.shape[0], 1))
        combos.append(np.concatenate([a, b], axis=1))
    cand = combos[-1]  # [N, m*n] level-major
    N = cand.shape[0]
    if N > 4096:
        raise ValueError("instance too large for exhaustive reference")

    # symbol index per step for each candidate
    weights_sym = 1 << (m - 1 - np.arange(m))
    sym = np.zeros((N, n), dtype=np.int64)
    for i in range(m):
        sym += cand[:, i * n : (i + 1) * n].astype(np.int64) * weights_sym[i]

    logC = np.log(np.maximum(state.C, _TINY))  # [n, M]
    direct = logC[np.arange(n)[None, :], sym].sum(axis=1)  # [N]

    # all description sequences, their points and relay words
    P = 1 << (mt * n)
    tilde_all = (
        (np.arange(P)[:, None] >> np.arange(mt * n - 1, -1, -1)[None, :]) & 1
    ).astype(np.uint8)
    logT = np.log(np.maximum(decoder.table, _TINY))  # [P_pts, M]
    relay_llrs = state.relay_ch_llrs
    segs = decoder.stream_segments()
    path_pts = np.empty((P, n), dtype=np.int64)
    relay_log = np.empty(P)
    for pidx in range(P):
        tb = tilde_all[pidx].reshape(n, mt, order="F")
        path_pts[pidx] = tilde_to_points(
            decoder.model.trellis, decoder.model.labeling, tb
        )
        flat = tb.T.ravel()
        lw = 0.0
        ok = True
        for j, code in enumerate(decoder.relay_codes):
            lo, hi = segs[j]
            word = ldpc.encode(code, flat[lo:hi])
            if ldpc.syndrome(code, word).any():
                ok = False
                break
            par = word[code.parity_positions].astype(np.float64)
            llr = relay_llrs[j][code.parity_positions]
            # llr = log p0/p1; log p(bit) up to the per-bit constant log(1+e^-|llr|)
            lw += float(np.sum(np.where(par > 0, -np.logaddexp(0.0, llr),
                                        -np.logaddexp(0.0, -llr))))
        relay_log[pidx] = lw if ok else -np.inf

    # joint over candidates: logsumexp over description sequences
    joint = np.empty(N)
    for c in range(N):
        terms = logT[path_pts, sym[c][None, :]].sum(axis=1) + relay_log
        mx = terms.max()
        joint[c] = direct[c] + (mx + np.log(np.exp(terms - mx).sum()) if np.isfinite(mx) else -np.inf)
    w = np.exp(joint - joint.max())
    return cand, w
