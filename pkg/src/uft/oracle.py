"""Small-instance reference solvers for validating the Sinkhorn module.

Nothing here imports the solver: the objective and its gradient are
re-derived independently so the two routes can check each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, ShapeMismatch, TooLarge

MAX_ASSIGNMENT_N = 8
MAX_PG_ENTRIES = 1024
PLAN_FLOOR = 1e-30


@dataclass(frozen=True)
class AssignmentResult:
    permutation: tuple[int, ...]
    cost: float


def brute_force_assignment(C) -> AssignmentResult:
    """Exact linear assignment by enumerating all permutations.

    Permutations are visited in lexicographic order and only a strictly
    smaller cost replaces the incumbent, so ties resolve to the
    lexicographically smallest permutation.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ShapeMismatch(f"assignment needs a square cost matrix, got {C.shape}")
    n = C.shape[0]
    if n > MAX_ASSIGNMENT_N:
        raise TooLarge(f"brute-force assignment limited to n <= {MAX_ASSIGNMENT_N}, got {n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)
    costs = np.zeros(len(perms))
    for i in range(n):
        costs += C[i, perms[:, i]]
    best = int(np.argmin(costs))
    return AssignmentResult(tuple(int(j) for j in perms[best]), float(costs[best]))


def _kl(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(a > 0, a * np.log(a / b), 0.0)
    return float(np.sum(t - a + b))


def uot_objective(T, C, alpha, beta, eta, tau) -> float:
    """Entropic UOT objective, entropy relative to ``alpha beta^T``."""
    ref = np.outer(alpha, beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(T > 0, T * (np.log(T / ref) - 1.0), 0.0)
    return float(
        np.sum(C * T)
        + tau * _kl(T.sum(axis=1), alpha)
        + tau * _kl(T.sum(axis=0), beta)
        + eta * np.sum(ent)
    )


def uot_gradient(T, C, alpha, beta, eta, tau) -> np.ndarray:
    """Analytic gradient of :func:`uot_objective` with respect to ``T`` (``T > 0``)."""
    r = T.sum(axis=1)
    c = T.sum(axis=0)
    return (
        C
        + tau * np.log(r / alpha)[:, None]
        + tau * np.log(c / beta)[None, :]
        + eta * np.log(T / np.outer(alpha, beta))
    )


def uot_projected_gradient(
    C,
    alpha,
    beta,
    eta: float,
    tau: float,
    steps: int = 20000,
    step_size: float = 0.1,
    growth: float = 1.1,
    patience: int = 50,
    stall_tol: float = 1e-10,
    window: int = 100,
) -> np.ndarray:
    """Minimize the entropic UOT objective by exponentiated gradient steps.

    ``T <- max(T * exp(-s * grad), 1e-30)`` keeps the plan positive.  A step
    that raises the objective (beyond rounding) is retried at half the size;
    accepted steps grow ``s`` by ``growth``.  Raises :class:`Diverged` after
    ``patience`` consecutive rejected trials.  Stops early once ``window``
    steps improve the objective by less than ``stall_tol`` relative.
    """
    C = np.asarray(C, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if C.shape != (alpha.size, beta.size):
        raise ShapeMismatch(f"cost {C.shape} vs masses ({alpha.size}, {beta.size})")
    if C.size > MAX_PG_ENTRIES:
        raise TooLarge(f"projected-gradient oracle limited to {MAX_PG_ENTRIES} plan entries")
    if not step_size > 0:
        raise ValueError("step_size must be positive")

    T = np.maximum(np.outer(alpha, beta) / math.sqrt(alpha.sum() * beta.sum()), PLAN_FLOOR)
    f = uot_objective(T, C, alpha, beta, eta, tau)
    s = step_size
    f_mark = f
    for step in range(1, steps + 1):
        g = uot_gradient(T, C, alpha, beta, eta, tau)
        rejected = 0
        while True:
            trial = np.maximum(T * np.exp(-s * g), PLAN_FLOOR)
            f_trial = uot_objective(trial, C, alpha, beta, eta, tau)
            if f_trial <= f + 4 * np.finfo(float).eps * abs(f):
                break
            rejected += 1
            if rejected >= patience:
                raise Diverged(f"objective increased for {patience} consecutive trial steps")
            s *= 0.5
        if np.array_equal(trial, T):
            break
        T, f = trial, f_trial
        s *= growth
        if step % window == 0:
            if f_mark - f <= stall_tol * abs(f):
                break
            f_mark = f
    return T
