"""Semantic-activation (de)normalization.

Style modulation parameters are pooled over positions that share semantics,
using the self-attention of the conditional features, then used to modulate
the conditional activation.  A second affine projection of that modulated
activation denormalizes the positionally normalized generator activation.

All maps are ``(n positions, c channels)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, TooFewChannels

EPS_STD = 1e-5


@dataclass
class ModulationPair:
    gamma: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.gamma.shape != self.mu.shape or self.gamma.ndim != 2:
            raise ShapeMismatch(f"gamma {self.gamma.shape} and mu {self.mu.shape} must be equal 2-D")
        if not (np.all(np.isfinite(self.gamma)) and np.all(np.isfinite(self.mu))):
            raise ValueError("modulation parameters must be finite")


@dataclass
class AffineMap:
    """Per-position affine map ``x @ weight + bias``."""

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def identity(cls, c: int) -> "AffineMap":
        return cls(np.eye(c), np.zeros(c))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != x.shape[1] or b.shape != (w.shape[1],):
            raise ShapeMismatch(f"affine weight {w.shape}/bias {b.shape} vs {x.shape[1]} channels")
        uniq, inverse = _unique_rows(x)
        return (uniq @ w + b)[inverse]


def _unique_rows(A: np.ndarray):
    # Identical rows are computed once and gathered, so duplicates stay
    # bitwise equal regardless of how BLAS tiles the product.
    uniq, inverse = np.unique(A, axis=0, return_inverse=True)
    return uniq, inverse.reshape(-1)


def semantic_activation_matrix(X, softmax: bool = True) -> np.ndarray:
    """Self-attention of the conditional features.

    With ``softmax`` (default) the logits ``x_i . x_j / sqrt(d)`` are
    normalized per row, giving a row-stochastic matrix.  ``softmax=False``
    returns the raw dot products ``x_i . x_j``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ShapeMismatch(f"expected (n, d) features, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    uniq, inverse = _unique_rows(X)
    logits = uniq @ X.T
    if softmax:
        logits = logits / np.sqrt(X.shape[1])
        logits -= logits.max(axis=1, keepdims=True)
        np.exp(logits, out=logits)
        logits /= logits.sum(axis=1, keepdims=True)
    return logits[inverse]


def aggregate_modulation(M, mods: ModulationPair) -> ModulationPair:
    """``gamma_X = M gamma_Z`` and ``mu_X = M mu_Z``."""
    M = np.asarray(M, dtype=np.float64)
    n = mods.gamma.shape[0]
    if M.shape != (n, n):
        raise ShapeMismatch(f"attention {M.shape} vs {n} modulation rows")
    uniq, inverse = _unique_rows(M)
    return ModulationPair((uniq @ mods.gamma)[inverse], (uniq @ mods.mu)[inverse])


def _check_pair(x: np.ndarray, mods: ModulationPair) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != mods.gamma.shape:
        raise ShapeMismatch(f"activation {x.shape} vs modulation {mods.gamma.shape}")
    return x


def modulate_conditional(X_act, mods: ModulationPair) -> np.ndarray:
    X_act = _check_pair(X_act, mods)
    return mods.gamma * X_act + mods.mu


def project_modulation(X_act_mod, gamma_map: AffineMap, mu_map: AffineMap) -> ModulationPair:
    X_act_mod = np.asarray(X_act_mod, dtype=np.float64)
    if X_act_mod.ndim != 2:
        raise ShapeMismatch(f"expected (n, c) activation, got {X_act_mod.shape}")
    return ModulationPair(gamma_map(X_act_mod), mu_map(X_act_mod))


def positional_norm_stats(L_act, eps_std: float = EPS_STD) -> tuple[np.ndarray, np.ndarray]:
    """Channel mean and ``sqrt(var + eps_std)`` at every position, shaped ``(n, 1)``."""
    L_act = np.asarray(L_act, dtype=np.float64)
    if L_act.ndim != 2:
        raise ShapeMismatch(f"expected (n, c) activation, got {L_act.shape}")
    if L_act.shape[1] < 2:
        raise TooFewChannels(f"positional normalization needs >= 2 channels, got {L_act.shape[1]}")
    mu_p = L_act.mean(axis=1, keepdims=True)
    gamma_p = np.sqrt(L_act.var(axis=1, keepdims=True) + eps_std)
    return mu_p, gamma_p


def seace_denormalize(L_act, mods: ModulationPair, eps_std: float = EPS_STD) -> np.ndarray:
    L_act = _check_pair(L_act, mods)
    mu_p, gamma_p = positional_norm_stats(L_act, eps_std)
    return mods.gamma * ((L_act - mu_p) / gamma_p) + mods.mu


def seace_forward(
    X_sem,
    style: ModulationPair,
    X_act,
    L_act,
    gamma_map: AffineMap | None = None,
    mu_map: AffineMap | None = None,
    softmax: bool = True,
) -> np.ndarray:
    """Full block: attention, aggregation, conditional modulation, projection, denormalization."""
    c = style.gamma.shape[1]
    gamma_map = gamma_map or AffineMap.identity(c)
    mu_map = mu_map or AffineMap.identity(c)
    M = semantic_activation_matrix(X_sem, softmax=softmax)
    pooled = aggregate_modulation(M, style)
    modulated = modulate_conditional(X_act, pooled)
    return seace_denormalize(L_act, project_modulation(modulated, gamma_map, mu_map))
