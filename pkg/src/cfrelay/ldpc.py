"""Binary LDPC codes: construction, alist I/O, systematic encoding, decoding.

The parity-check matrix lives as an edge list grouped by check (CSR-like),
which is also the message layout of the flooding sum-product decoder.  LLRs
follow the log(P0/P1) convention, positive meaning bit 0, and every produced
LLR is clamped to +-40.

Encoding uses a precomputed reduced form: Gaussian elimination over GF(2)
selects pivot columns as parity positions and leaves parity = P @ info.  A
dual-diagonal parity tail (the staircase layout of the large broadcast-TV
codes) is detected and encoded by accumulation instead, so externally loaded
matrices of that family stay encodable at full size where dense elimination
would be impractical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constellation import LLR_CLAMP

# Dense elimination is quadratic in the check count; beyond this length a
# loaded code must bring a staircase tail or it loads decode-only.
ENCODER_DENSE_LIMIT = 20000

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _parity_of_rows(packed: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(packed).sum(axis=-1).astype(np.uint8) & 1
    return _POPCOUNT[packed].sum(axis=-1).astype(np.uint8) & 1


@dataclass
class StaircaseEncoder:
    """Accumulator encoding for a dual-diagonal parity tail."""

    info_row_ptr: np.ndarray
    info_row_cols: np.ndarray

    def parity(self, info_bits: np.ndarray) -> np.ndarray:
        m = self.info_row_ptr.shape[0] - 1
        row = np.repeat(np.arange(m), np.diff(self.info_row_ptr))
        sums = np.bincount(row, weights=info_bits[self.info_row_cols], minlength=m)
        s = (sums.astype(np.int64) & 1).astype(np.uint8)
        return np.bitwise_xor.accumulate(s)


@dataclass
class DenseEncoder:
    """parity = P @ info over GF(2), P packed along the info axis."""

    p_packed: np.ndarray
    k: int

    def parity(self, info_bits: np.ndarray) -> np.ndarray:
        packed = np.packbits(info_bits.astype(np.uint8))
        return _parity_of_rows(self.p_packed & packed[None, :])


@dataclass
class LdpcCode:
    """Sparse parity-check code with a fixed edge ordering.

    Attributes:
        n: codeword length.
        check_ptr: [num_checks + 1] edge offsets, edges grouped by check.
        edge_bit: [E] bit index of each edge; within a check, ascending.
        info_positions / parity_positions: the systematic map (None when the
            code is not encodable).
    """

    n: int
    check_ptr: np.ndarray
    edge_bit: np.ndarray
    info_positions: np.ndarray | None = None
    parity_positions: np.ndarray | None = None
    _encoder: DenseEncoder | StaircaseEncoder | None = field(default=None, repr=False)

    @property
    def num_checks(self) -> int:
        return self.check_ptr.shape[0] - 1

    @property
    def num_edges(self) -> int:
        return self.edge_bit.shape[0]

    @property
    def k(self) -> int:
        return self.n - self.num_checks

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def encodable(self) -> bool:
        return self._encoder is not None

    def check_degrees(self) -> np.ndarray:
        return np.diff(self.check_ptr)

    def bit_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_bit, minlength=self.n)


@dataclass
class DecoderState:
    """Message memory of one sum-product decoding session."""

    msg_b2c: np.ndarray
    msg_c2b: np.ndarray
    checksum: np.ndarray
    iterations: int = 0

    def reset(self) -> None:
        self.msg_b2c[:] = 0.0
        self.msg_c2b[:] = 0.0
        self.checksum[:] = 0.0
        self.iterations = 0


def new_state(code: LdpcCode) -> DecoderState:
    return DecoderState(
        msg_b2c=np.zeros(code.num_edges),
        msg_c2b=np.zeros(code.num_edges),
        checksum=np.zeros(code.n),
    )


def spa_step(
    code: LdpcCode,
    state: DecoderState,
    channel_llrs: np.ndarray,
    extrinsic_priors: np.ndarray | None = None,
) -> np.ndarray:
    """One flooding iteration; returns per-bit extrinsic LLRs.

    The extrinsic output is channel_llrs plus the fresh check-to-bit sums; it
    excludes the just-injected priors, so the caller can feed it to whatever
    produced them without echo.
    """
    channel_llrs = np.asarray(channel_llrs, dtype=np.float64)
    if channel_llrs.shape != (code.n,):
        raise ValueError(f"channel_llrs must have shape ({code.n},)")
    if extrinsic_priors is None:
        input_llr = channel_llrs
    else:
        input_llr = channel_llrs + np.asarray(extrinsic_priors, dtype=np.float64)
    kernels.spa_update(
        code.check_ptr, code.edge_bit, input_llr,
        state.msg_b2c, state.msg_c2b, state.checksum,
    )
    state.iterations += 1
    return np.clip(channel_llrs + state.checksum, -LLR_CLAMP, LLR_CLAMP)


def posterior_llrs(
    state: DecoderState,
    channel_llrs: np.ndarray,
    extrinsic_priors: np.ndarray | None = None,
) -> np.ndarray:
    """Full per-bit posterior after the most recent step."""
    total = channel_llrs + state.checksum
    if extrinsic_priors is not None:
        total = total + extrinsic_priors
    return np.clip(total, -LLR_CLAMP, LLR_CLAMP)


def syndrome(code: LdpcCode, bits: np.ndarray) -> np.ndarray:
    """Per-check parity of a hard bit vector."""
    vals = bits.astype(np.uint8)[code.edge_bit]
    return np.bitwise_xor.reduceat(vals, code.check_ptr[:-1])


def decode(
    code: LdpcCode,
    channel_llrs: np.ndarray,
    max_iters: int = 50,
    damping: float = 0.5,
) -> tuple[np.ndarray, bool, int]:
    """Standalone sum-product decoding with early stop on a zero syndrome.

    Check-to-bit messages are damped (new = damping * fresh + rest * old),
    which breaks the even/odd oscillation short cycle-heavy graphs fall into;
    damping 1.0 recovers plain flooding.

    Returns:
        (hard bits, converged flag, iterations used).
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    channel_llrs = np.asarray(channel_llrs, dtype=np.float64)
    hard = (channel_llrs < 0).astype(np.uint8)
    # A zero-information input must not be reported as a successful decode,
    # so the zero-syndrome shortcut requires a nonzero posterior.
    if channel_llrs.any() and not syndrome(code, hard).any():
        return hard, True, 0
    state = new_state(code)
    prev_c2b = np.zeros(code.num_edges)
    for it in range(1, max_iters + 1):
        post = spa_step(code, state, channel_llrs)
        if damping != 1.0:
            state.msg_c2b *= damping
            state.msg_c2b += (1.0 - damping) * prev_c2b
            state.checksum[:] = np.bincount(
                code.edge_bit, weights=state.msg_c2b, minlength=code.n
            )
            post = channel_llrs + state.checksum
        prev_c2b[:] = state.msg_c2b
        hard = (post < 0).astype(np.uint8)
        if post.any() and not syndrome(code, hard).any():
            return hard, True, it
    return hard, False, max_iters


def encode(code: LdpcCode, info_bits: np.ndarray) -> np.ndarray:
    """Systematic codeword for the given information bits."""
    if not code.encodable:
        raise ValueError("code is not encodable (no systematic transform)")
    info_bits = np.asarray(info_bits).astype(np.uint8)
    if info_bits.shape != (len(code.info_positions),):
        raise ValueError(f"info_bits must have shape ({len(code.info_positions)},)")
    word = np.empty(code.n, dtype=np.uint8)
    word[code.info_positions] = info_bits
    word[code.parity_positions] = code._encoder.parity(info_bits)
    return word


def count_4cycles(code: LdpcCode) -> int:
    """Number of length-4 cycles (check pairs sharing two or more bits)."""
    from collections import Counter

    bit_checks: list[list[int]] = [[] for _ in range(code.n)]
    for c in range(code.num_checks):
        for b in code.edge_bit[code.check_ptr[c] : code.check_ptr[c + 1]]:
            bit_checks[int(b)].append(c)
    pair: Counter = Counter()
    for bc in bit_checks:
        for i in range(len(bc)):
            for j in range(i + 1, len(bc)):
                pair[(bc[i], bc[j])] += 1
    return sum(v * (v - 1) // 2 for v in pair.values())


# ---------------------------------------------------------------------------
# construction


def _pack_rows(check_ptr: np.ndarray, edge_bit: np.ndarray, n: int) -> np.ndarray:
    m = check_ptr.shape[0] - 1
    dense = np.zeros((m, n), dtype=np.uint8)
    rows = np.repeat(np.arange(m), np.diff(check_ptr))
    dense[rows, edge_bit] = 1
    return np.packbits(dense, axis=1)


def _gf2_rref_packed(packed: np.ndarray, n: int) -> tuple[np.ndarray, list[int]]:
    """In-place reduced row echelon form; returns (matrix, pivot columns)."""
    m = packed.shape[0]
    pivots: list[int] = []
    r = 0
    for col in range(n):
        if r == m:
            break
        byte, shift = divmod(col, 8)
        bit = (packed[r:, byte] >> (7 - shift)) & 1
        hits = np.nonzero(bit)[0]
        if hits.size == 0:
            continue
        lead = r + hits[0]
        if lead != r:
            packed[[r, lead]] = packed[[lead, r]]
        column_bit = (packed[:, byte] >> (7 - shift)) & 1
        column_bit[r] = 0
        sel = np.nonzero(column_bit)[0]
        if sel.size:
            packed[sel] ^= packed[r]
        pivots.append(col)
        r += 1
    return packed, pivots


def _detect_staircase(code: LdpcCode) -> StaircaseEncoder | None:
    """Recognize a dual-diagonal parity tail occupying the last m columns."""
    m, n = code.num_checks, code.n
    k = n - m
    row_cols: list[np.ndarray] = []
    for c in range(m):
        cols = code.edge_bit[code.check_ptr[c] : code.check_ptr[c + 1]]
        tail = cols[cols >= k] - k
        expected = {0} if c == 0 else {c - 1, c}
        if set(tail.tolist()) != expected:
            return None
        row_cols.append(cols[cols < k])
    ptr = np.zeros(m + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(rc) for rc in row_cols])
    flat = np.concatenate(row_cols) if row_cols else np.empty(0, dtype=np.int64)
    return StaircaseEncoder(info_row_ptr=ptr, info_row_cols=flat)


def _attach_encoder(code: LdpcCode, context: str) -> None:
    stair = _detect_staircase(code)
    if stair is not None:
        m = code.num_checks
        code.info_positions = np.arange(code.n - m, dtype=np.int64)
        code.parity_positions = np.arange(code.n - m, code.n, dtype=np.int64)
        code._encoder = stair
        return
    if code.n > ENCODER_DENSE_LIMIT:
        warnings.warn(
            f"{context}: length {code.n} exceeds the dense-elimination limit and "
            "no staircase tail was found; code loaded decode-only"
        )
        return
    packed = _pack_rows(code.check_ptr, code.edge_bit, code.n)
    packed, pivots = _gf2_rref_packed(packed, code.n)
    rank = len(pivots)
    if rank < code.num_checks:
        warnings.warn(
            f"{context}: parity-check matrix has rank {rank} < {code.num_checks} "
            "(declared); code loaded decode-only"
        )
        return
    parity_positions = np.asarray(pivots, dtype=np.int64)
    mask = np.ones(code.n, dtype=bool)
    mask[parity_positions] = False
    info_positions = np.nonzero(mask)[0]
    dense = np.unpackbits(packed, axis=1, count=code.n)
    p_dense = dense[:, info_positions]
    code.info_positions = info_positions
    code.parity_positions = parity_positions
    code._encoder = DenseEncoder(p_packed=np.packbits(p_dense, axis=1), k=len(info_positions))


def from_check_lists(
    check_bits: list[np.ndarray], n: int, context: str = "ldpc"
) -> LdpcCode:
    """Build a code from per-check bit index lists (validated and sorted)."""
    ptr = np.zeros(len(check_bits) + 1, dtype=np.int64)
    rows = []
    for i, cb in enumerate(check_bits):
        raw = np.asarray(cb, dtype=np.int64)
        cb = np.unique(raw)
        if cb.size != raw.size:
            raise ValueError(f"{context}: check {i} lists a bit twice")
        if cb.size == 0:
            raise ValueError(f"{context}: check {i} has no bits")
        if cb[0] < 0 or cb[-1] >= n:
            raise ValueError(f"{context}: check {i} references bit outside [0, {n})")
        rows.append(cb)
        ptr[i + 1] = ptr[i] + cb.size
    code = LdpcCode(n=n, check_ptr=ptr, edge_bit=np.concatenate(rows))
    _attach_encoder(code, context)
    return code


def gen_regular(n: int, col_weight: int, row_weight: int, seed: int) -> LdpcCode:
    """Pseudo-random (col_weight, row_weight)-regular code.

    Girth-6 is pursued by construction: bits pick their checks one socket at
    a time, preferring the least-loaded checks that do not close a 4-cycle
    with the checks already chosen for that bit; when no such check remains
    the least-offending one is taken.  The same seed always returns the same
    incidence lists.  Raises when the weights do not divide or when no
    full-rank draw is found.
    """
    if n * col_weight % row_weight:
        raise ValueError("n * col_weight must be divisible by row_weight")
    m = n * col_weight // row_weight
    if col_weight >= row_weight:
        raise ValueError("col_weight must be below row_weight (rate > 0)")
    if col_weight % 2 == 0:
        raise ValueError(
            "even col_weight makes every row sum vanish over GF(2); "
            "no full-rank regular code exists"
        )
    best: tuple[int, LdpcCode] | None = None
    for attempt in range(8):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        assign = _peg_lite(n, m, col_weight, row_weight, rng)
        if assign is None:
            continue
        _repair_4cycles(assign, m, rng)
        check_bits = [assign[c] for c in range(m)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            code = from_check_lists(check_bits, n, context=f"gen_regular(seed={seed})")
        if not code.encodable:
            continue
        cycles = count_4cycles(code)
        if cycles == 0:
            return code
        if best is None or cycles < best[0]:
            best = (cycles, code)
    if best is not None:
        return best[1]
    raise RuntimeError(
        f"gen_regular({n}, {col_weight}, {row_weight}, seed={seed}): "
        "no full-rank construction found in 8 attempts"
    )


def _peg_lite(
    n: int, m: int, col_weight: int, row_weight: int, rng: np.random.Generator
) -> dict[int, list[int]] | None:
    remaining = np.full(m, row_weight, dtype=np.int64)
    paired = np.zeros((m, m), dtype=bool)
    check_bits: dict[int, list[int]] = {c: [] for c in range(m)}
    tie_key = rng.random(m)
    for b in rng.permutation(n):
        chosen: list[int] = []
        for _ in range(col_weight):
            open_mask = remaining > 0
            for c in chosen:
                open_mask[c] = False
            if not open_mask.any():
                return None
            clean = open_mask.copy()
            for c in chosen:
                clean &= ~paired[c]
            pool = clean if clean.any() else open_mask
            idx = np.nonzero(pool)[0]
            load = remaining[idx]
            best = idx[load == load.max()]
            c = int(best[np.argmin(tie_key[best])])
            chosen.append(c)
        for i, c1 in enumerate(chosen):
            remaining[c1] -= 1
            check_bits[c1].append(int(b))
            for c2 in chosen[i + 1 :]:
                paired[c1, c2] = True
                paired[c2, c1] = True
        tie_key = np.roll(tie_key, 1)
    return check_bits


def _repair_4cycles(
    check_bits: dict[int, list[int]], m: int, rng: np.random.Generator, sweeps: int = 6
) -> None:
    """Swap edges between checks to clear residual 4-cycles, degree-preserving.

    Moving a shared bit b from check c2 to some check c3 while moving one of
    c3's bits back keeps all row and column weights.  A swap is applied only
    when it removes a conflict without creating any new one.
    """
    from collections import Counter

    sets = {c: set(bs) for c, bs in check_bits.items()}

    def pair_counts() -> Counter:
        pc: Counter = Counter()
        bit_checks: dict[int, list[int]] = {}
        for c, bs in sets.items():
            for b in bs:
                bit_checks.setdefault(b, []).append(c)
        for bc in bit_checks.values():
            bc.sort()
            for i in range(len(bc)):
                for j in range(i + 1, len(bc)):
                    pc[(bc[i], bc[j])] += 1
        return pc

    for _ in range(sweeps):
        pc = pair_counts()
        offenders = [(p, v) for p, v in pc.items() if v >= 2]
        if not offenders:
            break
        bit_checks: dict[int, list[int]] = {}
        for c, bs in sets.items():
            for b in bs:
                bit_checks.setdefault(b, []).append(c)
        fixed_any = False
        for (c1, c2), _v in offenders:
            shared = sorted(sets[c1] & sets[c2])
            if len(shared) < 2:
                continue
            b = shared[-1]
            done = False
            for c3 in rng.permutation(m):
                c3 = int(c3)
                if c3 in (c1, c2) or b in sets[c3]:
                    continue
                if any(
                    pc.get((min(c3, cx), max(c3, cx)), 0) > 0
                    for cx in bit_checks[b]
                    if cx != c2
                ):
                    continue
                for b3 in sorted(sets[c3]):
                    if b3 in sets[c2]:
                        continue
                    if any(
                        pc.get((min(c2, cx), max(c2, cx)), 0) > 0
                        for cx in bit_checks[b3]
                        if cx != c3
                    ):
                        continue
                    sets[c2].remove(b)
                    sets[c3].add(b)
                    sets[c3].remove(b3)
                    sets[c2].add(b3)
                    done = True
                    fixed_any = True
                    break
                if done:
                    break
            if done:
                break
        if not fixed_any:
            break
    for c in range(m):
        check_bits[c] = sorted(sets[c])


# ---------------------------------------------------------------------------
# alist format


def load_alist(path: str) -> LdpcCode:
    """Read a parity-check matrix in alist layout.

    Layout: "n m", then "max_col_w max_row_w", n column weights, m row
    weights, n column blocks of 1-based row indices, m row blocks of 1-based
    column indices; zero entries are padding.  Malformed content raises
    ValueError naming the offending line.
    """
    with open(path) as fh:
        raw = fh.read().split("\n")

    def ints(line_no: int) -> list[int]:
        try:
            return [int(tok) for tok in raw[line_no].split()]
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: parse error at line {line_no + 1}") from exc

    header = ints(0)
    if len(header) != 2:
        raise ValueError(f"{path}: parse error at line 1 (expected 'n m')")
    n, m = header
    maxw = ints(1)
    if len(maxw) != 2:
        raise ValueError(f"{path}: parse error at line 2 (expected two maxima)")
    col_w = ints(2)
    row_w = ints(3)
    if len(col_w) != n:
        raise ValueError(f"{path}: parse error at line 3 (expected {n} column weights)")
    if len(row_w) != m:
        raise ValueError(f"{path}: parse error at line 4 (expected {m} row weights)")

    check_bits: list[list[int]] = [[] for _ in range(m)]
    for j in range(n):
        line_no = 4 + j
        entries = [e for e in ints(line_no) if e != 0]
        if len(entries) != col_w[j]:
            raise ValueError(
                f"{path}: parse error at line {line_no + 1} "
                f"(column {j} lists {len(entries)} rows, weight says {col_w[j]})"
            )
        for r in entries:
            if not 1 <= r <= m:
                raise ValueError(f"{path}: parse error at line {line_no + 1} (row index {r})")
            check_bits[r - 1].append(j)
    for i in range(m):
        line_no = 4 + n + i
        if line_no < len(raw) and raw[line_no].strip():
            entries = [e for e in ints(line_no) if e != 0]
            if sorted(e - 1 for e in entries) != sorted(check_bits[i]):
                raise ValueError(
                    f"{path}: parse error at line {line_no + 1} "
                    f"(row {i} disagrees with the column lists)"
                )
    return from_check_lists(
        [np.asarray(cb, dtype=np.int64) for cb in check_bits], n, context=path
    )


def save_alist(path: str, code: LdpcCode) -> None:
    """Write the matrix in alist layout (rows padded with zeros)."""
    n, m = code.n, code.num_checks
    col_lists: list[list[int]] = [[] for _ in range(n)]
    row_lists: list[list[int]] = []
    for c in range(m):
        cols = code.edge_bit[code.check_ptr[c] : code.check_ptr[c + 1]]
        row_lists.append([int(x) + 1 for x in cols])
        for x in cols:
            col_lists[int(x)].append(c + 1)
    max_col = max(len(cl) for cl in col_lists)
    max_row = max(len(rl) for rl in row_lists)
    with open(path, "w") as fh:
        fh.write(f"{n} {m}\n")
        fh.write(f"{max_col} {max_row}\n")
        fh.write(" ".join(str(len(cl)) for cl in col_lists) + "\n")
        fh.write(" ".join(str(len(rl)) for rl in row_lists) + "\n")
        for cl in col_lists:
            padded = cl + [0] * (max_col - len(cl))
            fh.write(" ".join(str(x) for x in padded) + "\n")
        for rl in row_lists:
            padded = rl + [0] * (max_row - len(rl))
            fh.write(" ".join(str(x) for x in padded) + "\n")
