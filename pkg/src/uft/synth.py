"""Seeded synthetic feature fixtures.

Randomness comes from ``numpy.random.Philox`` (a counter-based 64-bit
generator), so a seed reproduces the same arrays on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alignment import FeaturePyramid
from .errors import InvalidSpec, NotSquare

PERTURB_SCALE = 0.1


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SynthSpec:
    n: int
    d: int
    k: int
    outlier_frac: float = 0.0
    spread: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("n", "d", "k", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise InvalidSpec(f"{name} must be an integer, got {value!r}")
        if not self.n >= self.k >= 1:
            raise InvalidSpec(f"need n >= k >= 1, got n={self.n}, k={self.k}")
        if self.d < 1:
            raise InvalidSpec(f"d must be >= 1, got {self.d}")
        if not 0 <= self.outlier_frac < 1:
            raise InvalidSpec(f"outlier_frac must lie in [0, 1), got {self.outlier_frac}")
        if not (self.spread > 0 and math.isfinite(self.spread)):
            raise InvalidSpec(f"spread must be positive, got {self.spread}")
        if not 0 <= self.seed < 2**64:
            raise InvalidSpec(f"seed must fit in 64 unsigned bits, got {self.seed}")


def _normalize(A: np.ndarray) -> np.ndarray:
    return A / np.linalg.norm(A, axis=-1, keepdims=True)


def _around(rng, centers, labels, spread):
    return _normalize(centers[labels] + spread * rng.standard_normal((labels.size, centers.shape[1])))


def gen_clustered_pair(spec: SynthSpec):
    """Two labeled point clouds around shared unit centers, plus exemplar outliers.

    Returns ``(X, Z, labels_X, labels_Z, outlier_mask_Z)``.  Every cluster
    gets ``n // k`` or ``n // k + 1`` points on each side.  The first
    ``floor(outlier_frac * n)`` rows of a random permutation of ``Z`` are
    redrawn around an extra center that ``X`` never uses; they carry label
    ``k``.
    """
    rng = rng_for(spec.seed)
    centers = _normalize(rng.standard_normal((spec.k + 1, spec.d)))
    base = np.arange(spec.n) % spec.k
    labels_X = rng.permutation(base)
    labels_Z = rng.permutation(base)
    X = _around(rng, centers, labels_X, spec.spread)
    Z = _around(rng, centers, labels_Z, spec.spread)
    n_out = math.floor(spec.outlier_frac * spec.n)
    mask = np.zeros(spec.n, dtype=bool)
    if n_out:
        rows = np.sort(rng.permutation(spec.n)[:n_out])
        mask[rows] = True
        labels_Z[rows] = spec.k
        Z[rows] = _around(rng, centers, labels_Z[rows], spec.spread)
    return X, Z, labels_X, labels_Z, mask


def gen_pyramid_from_image_grid(
    base, levels: int, spread: float = 0.05, seed: int = 0
) -> FeaturePyramid:
    """Build a pyramid whose levels double in side length.

    ``base`` is ``(n, d)`` with ``n`` a perfect square, or an ``(h, h, d)``
    grid.  Each finer level repeats every cell ``2 x 2`` and adds Gaussian
    detail of standard deviation ``0.1 * spread`` with its mean over every
    ``2 x 2`` block removed, so block averages equal the coarser level.
    """
    base = np.asarray(base, dtype=np.float64)
    if base.ndim == 2:
        side = math.isqrt(base.shape[0])
        if side * side != base.shape[0]:
            raise NotSquare(f"{base.shape[0]} rows do not form a square grid")
        grid = base.reshape(side, side, base.shape[1])
    elif base.ndim == 3 and base.shape[0] == base.shape[1]:
        grid = base
    else:
        raise NotSquare(f"expected (n, d) or (h, h, d) features, got {base.shape}")
    if int(levels) != levels or levels < 1:
        raise ValueError(f"levels must be a positive integer, got {levels}")
    if spread < 0:
        raise ValueError(f"spread must be nonnegative, got {spread}")
    rng = rng_for(seed)
    out = [grid]
    for _ in range(1, levels):
        up = np.repeat(np.repeat(out[-1], 2, axis=0), 2, axis=1)
        h, w, d = up.shape
        noise = rng.standard_normal(up.shape)
        blocks = noise.reshape(h // 2, 2, w // 2, 2, d)
        blocks -= blocks.mean(axis=(1, 3), keepdims=True)
        # Removing the mean of four samples leaves variance 3/4.
        detail = math.sqrt(4.0 / 3.0) * blocks.reshape(h, w, d)
        out.append(up + PERTURB_SCALE * spread * detail)
    return FeaturePyramid(out, grid.shape[0], grid.shape[1])
