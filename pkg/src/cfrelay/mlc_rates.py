"""Multilevel stream plumbing and the mutual informations behind rate choice.

All estimators are Monte Carlo plug-in estimators over the discrete
alphabets (source symbol, reconstruction point) with exact Gaussian
likelihoods for the continuous observations, sampled from the same
single-letter model the destination decoder uses: per-symbol quantizer
choice from the stored usage probabilities, nearest-neighbor cells,
Gaussian links.  Conditioning on lower levels uses the sampled bits
directly.  Sums are accumulated per chunk and combined with math.fsum so
the result does not depend on accumulation order beyond rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ChannelParams
from .constellation import Constellation
from .tcq import QuantizerModel, point_prob_table

_CHUNK = 1 << 15
_LOG2 = math.log(2.0)


def split_streams(bits: np.ndarray, m: int) -> np.ndarray:
    """Round-robin split into m streams; stream i takes positions ≡ i (mod m)."""
    bits = np.asarray(bits)
    if m < 1:
        raise ValueError("m must be positive")
    if bits.ndim != 1 or bits.size % m:
        raise ValueError(f"bit count {bits.size} not divisible by {m} streams")
    return bits.reshape(-1, m).T.copy()


def merge_streams(streams: np.ndarray) -> np.ndarray:
    """Inverse of split_streams; rows are streams of equal length."""
    streams = np.asarray(streams)
    if streams.ndim != 2:
        raise ValueError("streams must be a 2-D array (one row per stream)")
    return streams.T.reshape(-1).copy()


# ---------------------------------------------------------------------------
# estimation primitives


def _log_density(y: np.ndarray, centers: np.ndarray, var: float) -> np.ndarray:
    """Unnormalized complex-Gaussian log densities, shape [len(y), len(centers)]."""
    d = y[:, None] - centers[None, :]
    return -(d.real**2 + d.imag**2) / var


def _fsum_mean_std(partials_sum, partials_sq, n: int) -> tuple[float, float]:
    total = math.fsum(partials_sum)
    sq = math.fsum(partials_sq)
    mean = total / n
    var = max(sq / n - mean * mean, 0.0)
    return mean, math.sqrt(var / n)


def _sample_model(
    model: QuantizerModel,
    const: Constellation,
    params: ChannelParams,
    rng: np.random.Generator,
    n: int,
):
    """Draw (sym, y2, point, nn_all) from the single-letter quantizer model.

    nn_all[j, q] is the point quantizer q would output for sample j; the
    realized point uses the quantizer drawn from the usage probabilities of
    the sampled symbol.
    """
    if model.choice_probs is None:
        raise ValueError("choice_probs not set; run estimate_choice_probs first")
    sym = rng.integers(0, const.size, n)
    a = params.h12 * np.sqrt(params.ps)
    noise = rng.normal(0, np.sqrt(params.n2_var / 2), (n, 2))
    y2 = a * const.points[sym] + noise[:, 0] + 1j * noise[:, 1]
    K = model.num_quantizers
    cum = np.cumsum(model.choice_probs, axis=1)[sym]
    qid = (rng.random(n)[:, None] > cum).sum(axis=1)
    nn_all = np.empty((n, K), dtype=np.int64)
    for q in range(K):
        avail = model.quantizer_points(q)
        d = np.abs(y2[:, None] - model.codebook.points[avail][None, :])
        nn_all[:, q] = avail[np.argmin(d, axis=1)]
    point = nn_all[np.arange(n), qid]
    return sym, y2, point, nn_all


def _level_terms(logf: np.ndarray, sym: np.ndarray, m: int) -> np.ndarray:
    """Per-sample per-level plug-in log ratios, natural log, shape [n, m].

    logf[j, s] is the joint log density of sample j's observations under
    symbol s.  Level i's term is log p(obs | a^i) - log p(obs | a^{i-1})
    + log 2 with uniform bits, conditioning masks from the symbol prefix.
    """
    n, M = logf.shape
    s_all = np.arange(M)
    prev = logsumexp(logf, axis=1) - math.log(M)
    out = np.empty((n, m))
    for i in range(1, m + 1):
        width = m - i
        pref = sym >> width
        mask = (s_all[None, :] >> width) == pref[:, None]
        cur = logsumexp(np.where(mask, logf, -np.inf), axis=1) - width * _LOG2
        out[:, i - 1] = cur - prev
        prev = cur
    return out


# ---------------------------------------------------------------------------
# chain rule self-check


@dataclass(frozen=True)
class ChainRuleReport:
    per_level: np.ndarray
    per_level_stderr: np.ndarray
    joint: float
    joint_stderr: float
    deviation: float
    deviation_sigma: float

    @property
    def total(self) -> float:
        return float(self.per_level.sum())


def mi_chainrule_check(
    const: Constellation,
    params: ChannelParams,
    num_samples: int = 1_000_000,
    seed: int = 0,
) -> ChainRuleReport:
    """Per-level MIs versus the joint MI of the direct link, shared samples.

    The deviation |sum of per-level MIs - joint MI| is computed per sample
    (paired), so its standard error reflects the difference, not the
    individual estimates.
    """
    rng = np.random.default_rng(seed)
    m = const.num_levels
    g = params.h13 * np.sqrt(params.ps)
    lvl_sum = [[] for _ in range(m)]
    lvl_sq = [[] for _ in range(m)]
    j_sum, j_sq, d_sum, d_sq = [], [], [], []
    done = 0
    while done < num_samples:
        n = min(_CHUNK, num_samples - done)
        sym = rng.integers(0, const.size, n)
        noise = rng.normal(0, np.sqrt(params.n3_var / 2), (n, 2))
        y = g * const.points[sym] + noise[:, 0] + 1j * noise[:, 1]
        logf = _log_density(y, g * const.points, params.n3_var)
        joint = (
            logf[np.arange(n), sym]
            - (logsumexp(logf, axis=1) - math.log(const.size))
        ) / _LOG2
        terms = _level_terms(logf, sym, m) / _LOG2
        for i in range(m):
            lvl_sum[i].append(terms[:, i].sum())
            lvl_sq[i].append((terms[:, i] ** 2).sum())
        j_sum.append(joint.sum())
        j_sq.append((joint**2).sum())
        diff = terms.sum(axis=1) - joint
        d_sum.append(diff.sum())
        d_sq.append((diff**2).sum())
        done += n
    per = np.empty(m)
    per_se = np.empty(m)
    for i in range(m):
        per[i], per_se[i] = _fsum_mean_std(lvl_sum[i], lvl_sq[i], num_samples)
    joint_mi, joint_se = _fsum_mean_std(j_sum, j_sq, num_samples)
    dev, dev_se = _fsum_mean_std(d_sum, d_sq, num_samples)
    return ChainRuleReport(
        per_level=per,
        per_level_stderr=per_se,
        joint=joint_mi,
        joint_stderr=joint_se,
        deviation=abs(dev),
        deviation_sigma=max(dev_se, 1e-12),
    )


# ---------------------------------------------------------------------------
# CF source-level and relay-constraint estimators


def mi_source_levels(
    const: Constellation,
    params: ChannelParams,
    model: QuantizerModel | None,
    num_samples: int = 200_000,
    seed: int = 0,
    include_relay: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-level MIs of the source chain with relay description side info.

    Estimates I(level-i bit; reconstruction point, interference-free direct
    observation | lower levels) for every level on shared samples.  With
    include_relay False the reconstruction point is dropped, leaving the
    direct-link-only MIs; model may then be None.

    Returns:
        (estimates [m], standard errors [m]) in bits.
    """
    if model is None and include_relay:
        raise ValueError("a quantizer model is required when include_relay is set")
    rng = np.random.default_rng(seed)
    m = const.num_levels
    g = params.h13 * np.sqrt(params.ps)
    if include_relay:
        table = point_prob_table(model, const, params)
        tiny = np.finfo(float).tiny
        log_table = np.log(np.maximum(table, tiny))
    sums = [[] for _ in range(m)]
    sqs = [[] for _ in range(m)]
    done = 0
    while done < num_samples:
        n = min(_CHUNK, num_samples - done)
        if model is None:
            sym = rng.integers(0, const.size, n)
        else:
            sym, _, point, _ = _sample_model(model, const, params, rng, n)
        noise = rng.normal(0, np.sqrt(params.n3_var / 2), (n, 2))
        y13 = g * const.points[sym] + noise[:, 0] + 1j * noise[:, 1]
        logf = _log_density(y13, g * const.points, params.n3_var)
        if include_relay:
            logf = logf + log_table[point, :]
        terms = _level_terms(logf, sym, m) / _LOG2
        for i in range(m):
            sums[i].append(terms[:, i].sum())
            sqs[i].append((terms[:, i] ** 2).sum())
        done += n
    mis = np.empty(m)
    ses = np.empty(m)
    for i in range(m):
        mis[i], ses[i] = _fsum_mean_std(sums[i], sqs[i], num_samples)
    return mis, ses


def mi_source_level(
    level: int,
    const: Constellation,
    params: ChannelParams,
    model: QuantizerModel,
    num_samples: int = 200_000,
    seed: int = 0,
    include_relay: bool = True,
) -> tuple[float, float]:
    """Single level (1-based) of mi_source_levels."""
    if not 1 <= level <= const.num_levels:
        raise ValueError(f"level must be in 1..{const.num_levels}")
    mis, ses = mi_source_levels(
        const, params, model, num_samples, seed, include_relay
    )
    return float(mis[level - 1]), float(ses[level - 1])


@dataclass(frozen=True)
class ConstraintReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    feasible: bool


def mi_relay_constraint(
    const: Constellation,
    params: ChannelParams,
    model: QuantizerModel,
    relay_const: Constellation | None = None,
    num_samples: int = 200_000,
    seed: int = 0,
) -> ConstraintReport:
    """Compression rate needed versus relay-link rate available.

    lhs: I(relay observation; description | direct side info), i.e. the
    residual description rate after the destination's own observation of
    the same block.  rhs: MI of the relay's constellation over its link to
    the destination with the source treated as noise.  Feasible when
    lhs <= rhs + 2 combined standard errors.
    """
    rng = np.random.default_rng(seed)
    relay_const = relay_const or const
    g = params.h13 * np.sqrt(params.ps)
    a = params.h12 * np.sqrt(params.ps)
    table = point_prob_table(model, const, params)
    tiny = np.finfo(float).tiny
    cp = model.choice_probs

    l_sum, l_sq = [], []
    done = 0
    while done < num_samples:
        n = min(_CHUNK, num_samples - done)
        sym, y2, point, nn_all = _sample_model(model, const, params, rng, n)
        noise = rng.normal(0, np.sqrt(params.n3_var / 2), (n, 2))
        y13 = g * const.points[sym] + noise[:, 0] + 1j * noise[:, 1]
        lf2 = _log_density(y2, a * const.points, params.n2_var)
        lf3 = _log_density(y13, g * const.points, params.n3_var)
        # posterior over symbols given both observations, then given y13 only
        w = np.exp(lf2 + lf3 - logsumexp(lf2 + lf3, axis=1, keepdims=True))
        v = np.exp(lf3 - logsumexp(lf3, axis=1, keepdims=True))
        match = (nn_all == point[:, None]) @ cp.T  # [n, M]
        num = np.maximum((w * match).sum(axis=1), tiny)
        den = np.maximum((v * table[point, :]).sum(axis=1), tiny)
        term = (np.log(num) - np.log(den)) / _LOG2
        l_sum.append(term.sum())
        l_sq.append((term**2).sum())
        done += n
    lhs, lhs_se = _fsum_mean_std(l_sum, l_sq, num_samples)

    var23 = params.y23_noise_var()
    b = params.h23 * np.sqrt(params.pr)
    r_sum, r_sq = [], []
    done = 0
    while done < num_samples:
        n = min(_CHUNK, num_samples - done)
        sym2 = rng.integers(0, relay_const.size, n)
        noise = rng.normal(0, np.sqrt(var23 / 2), (n, 2))
        y = b * relay_const.points[sym2] + noise[:, 0] + 1j * noise[:, 1]
        logf = _log_density(y, b * relay_const.points, var23)
        term = (
            logf[np.arange(n), sym2]
            - (logsumexp(logf, axis=1) - math.log(relay_const.size))
        ) / _LOG2
        r_sum.append(term.sum())
        r_sq.append((term**2).sum())
        done += n
    rhs, rhs_se = _fsum_mean_std(r_sum, r_sq, num_samples)

    combined = math.sqrt(lhs_se**2 + rhs_se**2)
    return ConstraintReport(
        lhs=lhs,
        lhs_stderr=lhs_se,
        rhs=rhs,
        rhs_stderr=rhs_se,
        feasible=lhs <= rhs + 2 * combined,
    )


# ---------------------------------------------------------------------------
# rate assignment


@dataclass(frozen=True)
class RateProfile:
    """Per-level code rates with the slack left under the MI estimates."""

    levels: tuple[float, ...]
    slack: tuple[float, ...]
    margin: float

    def __post_init__(self):
        for r in self.levels:
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"rate {r} outside [0, 1]")

    @property
    def total(self) -> float:
        return float(math.fsum(self.levels))


def assign_rates(
    level_mis: np.ndarray, available_rates, margin: float = 0.02
) -> RateProfile:
    """Largest available rate at or below each level's MI minus the margin.

    Raises:
        ValueError: some level's MI minus margin is below every available
            rate (that level cannot carry the weakest code).
    """
    rates = sorted(float(r) for r in available_rates)
    if not rates:
        raise ValueError("available rate set is empty")
    chosen = []
    slack = []
    for i, mi in enumerate(np.asarray(level_mis, dtype=float)):
        cap = mi - margin
        fit = [r for r in rates if r <= cap]
        if not fit:
            raise ValueError(
                f"level {i + 1}: MI {mi:.4f} - margin {margin} admits no available rate"
            )
        chosen.append(fit[-1])
        slack.append(cap - fit[-1])
    return RateProfile(levels=tuple(chosen), slack=tuple(slack), margin=margin)


def rate_report_csv(
    level_mis: np.ndarray, stderrs: np.ndarray, profile: RateProfile
) -> str:
    """CSV rows: level, mi, stderr, assigned_rate, slack."""
    lines = ["level,mi,stderr,assigned_rate,slack"]
    for i, (mi, se, r, s) in enumerate(
        zip(level_mis, stderrs, profile.levels, profile.slack)
    ):
        lines.append(f"{i + 1},{mi:.6f},{se:.6f},{r:.6f},{s:.6f}")
    return "\n".join(lines) + "\n"


def make_rate_evaluator(
    const: Constellation,
    params: ChannelParams,
    relay_const: Constellation | None = None,
    num_samples: int = 100_000,
    seed: int = 0,
):
    """Evaluator for codebook optimization: CF sum rate under the constraint.

    Returns a callable mapping a quantizer model to the dict
    optimize_boundaries expects: objective (sum of per-level source MIs),
    lhs and rhs of the compression constraint, plus the raw reports.
    """

    def evaluate(model: QuantizerModel) -> dict:
        mis, ses = mi_source_levels(
            const, params, model, num_samples=num_samples, seed=seed
        )
        rep = mi_relay_constraint(
            const, params, model, relay_const, num_samples=num_samples, seed=seed + 1
        )
        return {
            "objective": float(mis.sum()),
            "lhs": rep.lhs,
            "rhs": rep.rhs,
            "mis": mis,
            "stderrs": ses,
            "constraint": rep,
        }

    return evaluate
