"""Transport-side losses and matching-quality metrics.

Index maps are integer arrays ``match`` with ``match[i]`` the column (or
exemplar row) assigned to source row ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRow, LengthMismatch, ShapeMismatch
from .measures import _unit_rows, as_features, cosine_cost_matrix

CX_BANDWIDTH = 0.5
CX_EPS = 1e-5
EMPTY_ROW = 1e-30


def _l1_mean(A, B) -> float:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape:
        raise ShapeMismatch(f"feature shapes differ: {A.shape} vs {B.shape}")
    return float(np.mean(np.abs(A - B)))


def feature_consistency_loss(A, B) -> float:
    """Mean absolute difference between two feature sets of the same shape."""
    return _l1_mean(A, B)


def perceptual_distance(featY, featX) -> float:
    """Mean absolute difference between externally extracted feature activations."""
    return _l1_mean(featY, featX)


def contextual_similarity(featZ, featY, h: float = CX_BANDWIDTH) -> np.ndarray:
    """Row-stochastic contextual similarity ``CX`` between rows of ``featZ`` and ``featY``.

    Cosine distances are divided by each row's minimum (plus ``1e-5``), mapped
    through ``exp((1 - d) / h)`` and normalized over ``j``.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    d = cosine_cost_matrix(featZ, featY)
    d_rel = d / (d.min(axis=1, keepdims=True) + CX_EPS)
    logits = (1.0 - d_rel) / h
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


def contextual_loss(featZ, featY, h: float = CX_BANDWIDTH) -> float:
    """``-log(mean_i max_j CX_ij)``; zero when every row has a single dominant context."""
    cx = contextual_similarity(featZ, featY, h)
    return float(-np.log(np.mean(cx.max(axis=1))))


def weighted_objective(terms: dict[str, float], weights: dict[str, float]) -> float:
    """``sum_k weights[k] * terms[k]``; every term needs an explicit weight."""
    missing = sorted(set(terms) - set(weights))
    if missing:
        raise KeyError(f"no weight given for {', '.join(missing)}")
    extra = sorted(set(weights) - set(terms))
    if extra:
        raise KeyError(f"weights given for unknown terms {', '.join(extra)}")
    return float(sum(weights[k] * terms[k] for k in terms))


def argmax_match_cosine(X, Z) -> np.ndarray:
    """Most cosine-similar row of ``Z`` for every row of ``X`` (first index on ties)."""
    X = as_features(X, "X")
    Z = as_features(Z, "Z")
    if X.shape[1] != Z.shape[1]:
        raise ShapeMismatch(f"feature dims differ: {X.shape[1]} vs {Z.shape[1]}")
    sim = _unit_rows(X, "X") @ _unit_rows(Z, "Z").T
    return np.argmax(sim, axis=1)


def argmax_match_plan(T) -> np.ndarray:
    """Column of largest plan mass in every row (first index on ties)."""
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[1] < 1:
        raise ShapeMismatch(f"plan must be a non-empty matrix, got shape {T.shape}")
    if np.any(T < 0):
        raise ValueError("plan has negative entries")
    peak = T.max(axis=1)
    empty = np.flatnonzero(peak < EMPTY_ROW)
    if empty.size:
        raise EmptyRow(f"plan row {empty[0]} carries no mass")
    return np.argmax(T, axis=1)


@dataclass(frozen=True)
class MatchingReport:
    many_to_one_rate: float
    outlier_leakage: float
    accuracy: float

    def to_text(self, prefix: str = "") -> str:
        return (
            f"{prefix}many_to_one_rate: {self.many_to_one_rate!r}\n"
            f"{prefix}outlier_leakage: {self.outlier_leakage!r}\n"
            f"{prefix}accuracy: {self.accuracy!r}\n"
        )


def many_to_one_rate(match) -> float:
    """Excess claimants over distinct matched columns, divided by ``n``."""
    match = np.asarray(match)
    n = match.size
    if n == 0:
        raise LengthMismatch("empty match")
    return (n - np.unique(match).size) / n


def one_hot_plan(match, n_cols: int) -> np.ndarray:
    match = np.asarray(match)
    T = np.zeros((match.size, n_cols))
    T[np.arange(match.size), match] = 1.0
    return T


def outlier_leakage(T, outlier_mask_Z) -> float:
    T = np.asarray(T, dtype=np.float64)
    mask = np.asarray(outlier_mask_Z, dtype=bool)
    if T.ndim != 2 or mask.shape != (T.shape[1],):
        raise LengthMismatch(f"mask of length {mask.size} vs plan {T.shape}")
    total = T.sum()
    if not total > 0:
        raise ValueError("plan carries no mass")
    return float(T[:, mask].sum() / total)


def matching_report(match, labels_X, labels_Z, T=None, outlier_mask_Z=None) -> MatchingReport:
    """Summarize a hard matching and the plan that produced it.

    Leakage is measured on ``T``; without a plan (e.g. cosine matching) the
    one-hot plan of ``match`` is used.  No mask means no outliers.
    """
    match = np.asarray(match)
    labels_X = np.asarray(labels_X)
    labels_Z = np.asarray(labels_Z)
    n = labels_X.size
    if match.ndim != 1 or match.size != n:
        raise LengthMismatch(f"match has {match.size} entries for {n} labeled rows")
    if match.size and (match.min() < 0 or match.max() >= labels_Z.size):
        raise LengthMismatch(f"match indexes outside {labels_Z.size} exemplar rows")
    if T is None:
        T = one_hot_plan(match, labels_Z.size)
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (n, labels_Z.size):
        raise LengthMismatch(f"plan {T.shape} vs labels ({n}, {labels_Z.size})")
    if outlier_mask_Z is None:
        outlier_mask_Z = np.zeros(labels_Z.size, dtype=bool)
    return MatchingReport(
        many_to_one_rate=float(many_to_one_rate(match)),
        outlier_leakage=outlier_leakage(T, outlier_mask_Z),
        accuracy=float(np.mean(labels_X == labels_Z[match])),
    )
