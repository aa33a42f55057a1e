"""Scalar-quantizer compress-forward baseline.

The relay side of the earlier scalar scheme: independent Lloyd-Max
quantizers on the real and imaginary parts of the relay observation,
glued into the same quantizer-model interface the trellis path uses so
the destination pipeline is shared.  Cell masses for the product cells
are exact normal-CDF rectangle integrals, no grid involved.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tcq
from .channel import ChannelParams, relay_observe
from .constellation import Constellation


@dataclass(frozen=True)
class ScalarQuantizer:
    """1-D quantizer: ascending points and the interior cell boundaries."""

    points: np.ndarray       # [L] ascending
    boundaries: np.ndarray   # [L - 1] strictly increasing
    mse: float
    iterations: int

    @property
    def levels(self) -> int:
        return self.points.shape[0]

    @property
    def rate_bits(self) -> int:
        return max(1, int(np.ceil(np.log2(self.levels))))


def lloyd_max(
    samples: np.ndarray, levels: int, tol: float = 1e-9, max_iters: int = 200
) -> ScalarQuantizer:
    """Design a Lloyd-Max quantizer from training samples.

    Alternates nearest-cell assignment and centroid updates until the
    relative MSE change drops below tol.  A cell that loses all samples is
    reseeded at the farthest sample of the most populated cell (reported
    with a warning).  Deterministic given the sample array.

    Args:
        samples: real training data, at least 10^4 values.
        levels: number of reconstruction points, at least 2.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if levels < 2:
        raise ValueError("levels must be at least 2")
    if x.size < 10_000:
        raise ValueError(f"need at least 10^4 samples, got {x.size}")
    # quantile seeding keeps every cell populated at the start
    qs = (np.arange(levels) + 0.5) / levels
    points = np.quantile(x, qs)
    prev_mse = np.inf
    reseeds = 0
    iters = 0
    for iters in range(1, max_iters + 1):
        bnd = 0.5 * (points[:-1] + points[1:])
        idx = np.searchsorted(bnd, x, side="left")
        counts = np.bincount(idx, minlength=levels)
        while (counts == 0).any():
            dead = int(np.argmax(counts == 0))
            big = int(np.argmax(counts))
            members = x[idx == big]
            far = members[np.argmax(np.abs(members - points[big]))]
            points[dead] = far
            points = np.sort(points)
            bnd = 0.5 * (points[:-1] + points[1:])
            idx = np.searchsorted(bnd, x, side="left")
            counts = np.bincount(idx, minlength=levels)
            reseeds += 1
        sums = np.bincount(idx, weights=x, minlength=levels)
        points = sums / counts
        mse = np.mean((x - points[idx]) ** 2)
        if np.isfinite(prev_mse) and prev_mse - mse <= tol * prev_mse:
            prev_mse = mse
            break
        prev_mse = mse
    if reseeds:
        warnings.warn(f"reseeded {reseeds} empty cell(s) during Lloyd-Max design")
    bnd = 0.5 * (points[:-1] + points[1:])
    return ScalarQuantizer(
        points=points, boundaries=bnd, mse=float(prev_mse), iterations=iters
    )


def quantize(q: ScalarQuantizer, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-cell assignment; values on a boundary go to the lower cell.

    Returns:
        (bits [N, rate_bits] most significant first, reconstructions [N]).
    """
    y = np.asarray(y, dtype=np.float64)
    idx = np.searchsorted(q.boundaries, y, side="left")
    width = q.rate_bits
    shifts = np.arange(width - 1, -1, -1)
    bits = ((idx[..., None] >> shifts) & 1).astype(np.uint8)
    return bits, q.points[idx]


@dataclass(frozen=True)
class ProductQuantizer:
    """Independent per-dimension scalar quantizers on a complex source."""

    q_re: ScalarQuantizer
    q_im: ScalarQuantizer

    @property
    def num_points(self) -> int:
        return self.q_re.levels * self.q_im.levels

    @property
    def rate_bits(self) -> int:
        return self.q_re.rate_bits + self.q_im.rate_bits

    @property
    def points(self) -> np.ndarray:
        """Complex grid, index = re_index * im_levels + im_index."""
        return (self.q_re.points[:, None] + 1j * self.q_im.points[None, :]).ravel()

    def quantize(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=np.complex128)
        b_re, r_re = quantize(self.q_re, y.real)
        b_im, r_im = quantize(self.q_im, y.imag)
        return np.concatenate([b_re, b_im], axis=-1), r_re + 1j * r_im


def design_product_quantizer(
    samples: np.ndarray, levels_per_dim: int = 4, tol: float = 1e-9
) -> ProductQuantizer:
    """Per-real-dimension Lloyd-Max design on complex samples."""
    samples = np.asarray(samples, dtype=np.complex128)
    return ProductQuantizer(
        q_re=lloyd_max(samples.real, levels_per_dim, tol=tol),
        q_im=lloyd_max(samples.imag, levels_per_dim, tol=tol),
    )


def _full_edges(q: ScalarQuantizer) -> np.ndarray:
    return np.concatenate([[-np.inf], q.boundaries, [np.inf]])


def product_model(pq: ProductQuantizer) -> tcq.QuantizerModel:
    """Wrap a product quantizer in the shared quantizer-model interface.

    Uses an identity trellis (one state, every description bit uncoded) with
    direct labeling, so the joint decoder's forward-backward step reduces to
    per-symbol marginalization.  Point index packs the per-dimension level
    bits, real dimension first.
    """
    L_re, L_im = pq.q_re.levels, pq.q_im.levels
    if L_re & (L_re - 1) or L_im & (L_im - 1):
        raise ValueError("product model needs power-of-two levels per dimension")
    m = pq.rate_bits
    generator = tuple(
        tuple(1 if c == r else 0 for c in range(m)) for r in range(m)
    )
    trellis = tcq.build_trellis(generator)
    point_index = (
        np.arange(L_re)[:, None] * L_im + np.arange(L_im)[None, :]
    ).astype(np.int64)
    codebook = tcq.Codebook(
        kind="custom",
        points=pq.points,
        scale=1.0,
        shape_params={
            "points": pq.points.copy(),
            "re_edges": _full_edges(pq.q_re),
            "im_edges": _full_edges(pq.q_im),
            "point_index": point_index,
        },
    )
    labeling = tcq.direct_labeling(trellis, codebook)
    model = tcq.QuantizerModel(
        trellis=trellis, labeling=labeling, codebook=codebook, cell_mode="product"
    )
    model.choice_probs = None
    return model


def design_relay_scalar(
    const: Constellation,
    params: ChannelParams,
    levels_per_dim: int = 4,
    num_samples: int = 200_000,
    seed: int = 0,
) -> tcq.QuantizerModel:
    """Scalar-CF relay quantizer trained on simulated relay observations."""
    rng = np.random.default_rng(seed)
    sym = rng.integers(0, const.size, num_samples)
    y2 = relay_observe(params, const.points[sym], rng)
    pq = design_product_quantizer(y2, levels_per_dim)
    model = product_model(pq)
    tcq.estimate_choice_probs(model, const, params, samples_per_symbol=1, seed=seed)
    return model
