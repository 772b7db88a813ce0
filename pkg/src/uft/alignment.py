"""Warping exemplar features with a transport plan.

Plans index grid cells in row-major order.  A plan solved at the base
resolution is reused at finer pyramid levels by splitting every base entry
uniformly over the ``s x s`` sub-cells on both sides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ResolutionMismatch, ShapeMismatch, UnsupportedScale

EPS_ROW = 1e-12
SUPPORTED_SCALES = (2, 4)


@dataclass
class FeaturePyramid:
    """Feature maps ``(h, w, d)`` whose side lengths double level by level."""

    levels: list[np.ndarray]
    base_h: int
    base_w: int

    def __post_init__(self):
        if not self.levels:
            raise ResolutionMismatch("pyramid needs at least one level")
        self.levels = [np.asarray(level, dtype=np.float64) for level in self.levels]
        for k, level in enumerate(self.levels):
            want = (self.base_h << k, self.base_w << k)
            if level.ndim != 3 or level.shape[:2] != want:
                raise ResolutionMismatch(f"level {k} has shape {level.shape}, expected {want} x d")


def _as_plan(T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2:
        raise ShapeMismatch(f"plan must be a matrix, got shape {T.shape}")
    return T


def _grid(n: int) -> tuple[int, int]:
    side = math.isqrt(n)
    if side * side != n:
        raise ResolutionMismatch(f"{n} cells do not form a square grid; pass the grid shape")
    return side, side


def barycentric_warp(T, Z, eps_row: float = EPS_ROW) -> np.ndarray:
    """Row ``i`` of the result is ``sum_j T_ij z_j / (sum_j T_ij + eps_row)``."""
    T = _as_plan(T)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != T.shape[1]:
        raise ShapeMismatch(f"plan {T.shape} cannot warp features of shape {Z.shape}")
    return (T @ Z) / (T.sum(axis=1) + eps_row)[:, None]


def _fine_parents(h: int, w: int, s: int) -> np.ndarray:
    ys, xs = np.divmod(np.arange(h * s * w * s), w * s)
    return (ys // s) * w + xs // s


def expand_plan(T, s: int, grid_x=None, grid_z=None) -> np.ndarray:
    """Split every base entry uniformly over the ``s x s`` sub-cells of both endpoints.

    Each fine entry is ``T_ij / s**4``, so fine row sums are base row sums over
    ``s**2`` and the total mass is unchanged.  Grids default to square.
    """
    if s not in SUPPORTED_SCALES:
        raise UnsupportedScale(f"scale must be one of {SUPPORTED_SCALES}, got {s}")
    T = _as_plan(T)
    hx, wx = grid_x or _grid(T.shape[0])
    hz, wz = grid_z or _grid(T.shape[1])
    if hx * wx != T.shape[0] or hz * wz != T.shape[1]:
        raise ResolutionMismatch(f"grids {(hx, wx)}, {(hz, wz)} do not match plan {T.shape}")
    px = _fine_parents(hx, wx, s)
    pz = _fine_parents(hz, wz, s)
    return T[np.ix_(px, pz)] / float(s**4)


def _block_sum(level: np.ndarray, s: int) -> np.ndarray:
    h, w, d = level.shape
    return level.reshape(h // s, s, w // s, s, d).sum(axis=(1, 3)).reshape(-1, d)


def _warp_level(T: np.ndarray, level: np.ndarray, s: int, eps_row: float) -> np.ndarray:
    # Same arithmetic as barycentric_warp(expand_plan(T, s), level) without
    # materializing the (s^2 n)^2 expanded plan.
    h, w, d = level.shape
    if s == 1:
        out = barycentric_warp(T, level.reshape(-1, d), eps_row)
        return out.reshape(h, w, d)
    num = (T @ _block_sum(level, s)) / float(s**4)
    den = T.sum(axis=1) / float(s**2) + eps_row
    coarse = (num / den[:, None]).reshape(h // s, w // s, d)
    return np.repeat(np.repeat(coarse, s, axis=0), s, axis=1)


def multi_stage_transport(T, pyramid: FeaturePyramid, eps_row: float = EPS_ROW) -> FeaturePyramid:
    """Warp every level of an exemplar pyramid with one base-resolution plan."""
    T = _as_plan(T)
    n_base = pyramid.base_h * pyramid.base_w
    if T.shape != (n_base, n_base):
        raise ResolutionMismatch(
            f"plan {T.shape} does not match base grid {pyramid.base_h}x{pyramid.base_w}"
        )
    warped = []
    for k, level in enumerate(pyramid.levels):
        s = 1 << k
        if s > 1 and s not in SUPPORTED_SCALES:
            raise UnsupportedScale(f"level {k} needs scale {s}; supported {SUPPORTED_SCALES}")
        warped.append(_warp_level(T, level, s, eps_row))
    return FeaturePyramid(warped, pyramid.base_h, pyramid.base_w)


def _row_normalize(A: np.ndarray) -> np.ndarray:
    sums = A.sum(axis=1, keepdims=True)
    return np.divide(A, sums, out=np.zeros_like(A), where=sums > 0)


def cycle_loss(T, Z) -> float:
    """Mean absolute error of ``Z`` after a round trip through the plan.

    Both directions use row-normalized plans (``T`` then ``T^T``), so the
    loss does not depend on the plan's total mass.  Empty rows map to zero.
    """
    T = _as_plan(T)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] != T.shape[1]:
        raise ShapeMismatch(f"plan {T.shape} incompatible with features {Z.shape}")
    forward = _row_normalize(T) @ Z
    back = _row_normalize(T.T) @ forward
    return float(np.mean(np.abs(back - Z)))
