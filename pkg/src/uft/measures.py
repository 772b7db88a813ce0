"""Feature sets, cosine cost matrices and adaptive mass estimation.

Feature sets are plain ``(n, d)`` float arrays; masses are length-``n``
nonnegative vectors.  Nothing here normalizes masses: the imbalance between
the two totals is exactly what the unbalanced solver consumes.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidMass, ZeroNormFeature

EPS_MASS = 1e-6
ZERO_NORM = 1e-12


def as_features(X, name: str = "features") -> np.ndarray:
    """Validate and return ``X`` as a float64 ``(n, d)`` array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name}: expected a non-empty (n, d) matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    return arr


def as_masses(m, name: str = "mass") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidMass(f"{name}: expected a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMass(f"{name}: non-finite entries")
    if np.any(arr < 0):
        raise InvalidMass(f"{name}: negative entries")
    if not arr.sum() > 0:
        raise InvalidMass(f"{name}: total mass must be positive")
    return arr


def _unit_rows(X: np.ndarray, name: str) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms < ZERO_NORM)
    if bad.size:
        raise ZeroNormFeature(f"{name}: row {bad[0]} has norm {norms[bad[0]]:.3g}")
    return X / norms[:, None]


def cosine_cost_matrix(X, Z) -> np.ndarray:
    """``C[i, j] = 1 - cos(x_i, z_j)``, clipped to ``[0, 2]`` against rounding."""
    X = as_features(X, "X")
    Z = as_features(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {X.shape[1]} vs {Z.shape[1]}")
    cos = _unit_rows(X, "X") @ _unit_rows(Z, "Z").T
    return np.clip(1.0 - cos, 0.0, 2.0)


def compute_masses(X, Z, eps_mass: float = EPS_MASS) -> tuple[np.ndarray, np.ndarray]:
    """Relevance masses of each feature against the other set's mean.

    ``alpha_i = x_i . mean(Z)`` and ``beta_j = z_j . mean(X)``; raw relevance
    can be negative, so both are clamped from below at ``eps_mass``.
    """
    X = as_features(X, "X")
    Z = as_features(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {X.shape[1]} vs {Z.shape[1]}")
    alpha = X @ Z.mean(axis=0)
    beta = Z @ X.mean(axis=0)
    return np.maximum(alpha, eps_mass), np.maximum(beta, eps_mass)
