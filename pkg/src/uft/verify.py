"""Seeded cross-checks of the solvers against the independent oracles.

Every check draws its instances from its own generator so checks can be run
alone with the same results.  Solvers are injectable, which lets callers
confirm that the suite actually catches a broken implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import oracle
from .losses import argmax_match_plan
from .sinkhorn import (
    SolverOptions,
    TransportSolution,
    dual_objective,
    plan_from_duals,
    primal_objective,
    solve_balanced,
    solve_unbalanced,
)
from .synth import rng_for

DUAL_SLACK = 1e-10

Solver = Callable[..., TransportSolution]


@dataclass
class Solvers:
    balanced: Solver = solve_balanced
    unbalanced: Solver = solve_unbalanced


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    stats: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _random_cost(rng, n: int, m: int | None = None) -> np.ndarray:
    return 2.0 * rng.random((n, n if m is None else m))


def dual_is_monotone(history, slack: float = DUAL_SLACK) -> bool:
    return bool(np.all(np.diff(np.asarray(history)) >= -slack))


def check_assignment(
    seed, n=6, trials=100, eta=1e-3, solvers=Solvers(), min_agree=0.95, record_dual=True
):
    """Balanced plans against exhaustive assignment, unit mass on every point."""
    rng = rng_for(seed)
    worst, agree, monotone = 0.0, 0, True
    opts = SolverOptions(eta=eta, record_dual=record_dual)
    for _ in range(trials):
        C = _random_cost(rng, n)
        ones = np.ones(n)
        sol = solvers.balanced(C, ones, ones, opts)
        exact = oracle.brute_force_assignment(C)
        cost = float(np.sum(C * sol.plan))
        worst = max(worst, abs(cost - exact.cost) / max(exact.cost, 1e-12))
        agree += tuple(argmax_match_plan(sol.plan).tolist()) == exact.permutation
        monotone &= dual_is_monotone(sol.dual_history)
    pct = 100.0 * agree / trials
    ok = worst <= 0.01 and agree >= min_agree * trials and monotone
    return CheckResult(
        "assignment",
        ok,
        f"agreement {pct:.1f}% ({agree}/{trials}), worst cost gap {worst:.2e}",
        {"agree": agree, "trials": trials, "worst_rel_gap": worst, "monotone": monotone},
    )


def check_marginals(seed, trials=50, max_n=64, eta=1e-3, solvers=Solvers()):
    """Converged balanced plans reproduce both marginals to 1e-6 of the total."""
    rng = rng_for(seed)
    worst, converged, monotone = 0.0, 0, True
    opts = SolverOptions(eta=eta, record_dual=True)
    for _ in range(trials):
        n, m = rng.integers(1, max_n + 1, size=2)
        C = _random_cost(rng, n, m)
        total = rng.uniform(0.5, 2.0)
        alpha = rng.uniform(0.1, 1.0, n)
        beta = rng.uniform(0.1, 1.0, m)
        alpha *= total / alpha.sum()
        beta *= total / beta.sum()
        sol = solvers.balanced(C, alpha, beta, opts)
        monotone &= dual_is_monotone(sol.dual_history)
        if not sol.converged:
            continue
        converged += 1
        r, c = sol.marginals()
        err = max(np.max(np.abs(r - alpha)), np.max(np.abs(c - beta))) / total
        worst = max(worst, float(err))
    # Only converged solves promise the marginals; some ill-conditioned
    # draws (e.g. very few columns) exhaust max_iters at small eta.
    ok = worst <= 1e-6 and converged > 0 and monotone
    return CheckResult(
        "marginals",
        ok,
        f"{converged}/{trials} converged, worst marginal error {worst:.2e} of total",
        {"worst": worst, "converged": converged, "monotone": monotone},
    )


def check_uot_oracle(seed, trials=50, max_n=16, solvers=Solvers(), rtol=0.005):
    """Unbalanced primal value against the exponentiated-gradient minimizer."""
    rng = rng_for(seed)
    worst, monotone = 0.0, True
    for _ in range(trials):
        n, m = rng.integers(1, max_n + 1, size=2)
        eta = float(rng.choice([1e-2, 1e-3]))
        tau = float(rng.choice([0.1, 1.0, 10.0]))
        C = _random_cost(rng, n, m)
        alpha = rng.uniform(0.1, 1.0, n) / n
        beta = rng.uniform(0.1, 1.0, m) / m
        sol = solvers.unbalanced(C, alpha, beta, SolverOptions(eta=eta, tau=tau, record_dual=True))
        ref = oracle.uot_projected_gradient(C, alpha, beta, eta, tau)
        f_ref = oracle.uot_objective(ref, C, alpha, beta, eta, tau)
        f_sol = oracle.uot_objective(sol.plan, C, alpha, beta, eta, tau)
        worst = max(worst, abs(f_sol - f_ref) / max(abs(f_ref), 1e-12))
        monotone &= dual_is_monotone(sol.dual_history)
    return CheckResult(
        "uot_oracle",
        worst <= rtol and monotone,
        f"worst relative objective gap {worst:.2e} over {trials} instances",
        {"worst_rel_gap": worst, "monotone": monotone},
    )


def check_balanced_limit(seed, trials=10, n=8, eta=1e-2, tau=1e3, solvers=Solvers(), atol=1e-3):
    """Large ``tau`` with equal uniform masses recovers the balanced plan."""
    rng = rng_for(seed)
    worst, monotone = 0.0, True
    for _ in range(trials):
        C = _random_cost(rng, n)
        a = _uniform(n)
        bal = solvers.balanced(C, a, a, SolverOptions(eta=eta, record_dual=True))
        unb = solvers.unbalanced(C, a, a, SolverOptions(eta=eta, tau=tau, record_dual=True))
        worst = max(worst, float(np.linalg.norm(unb.plan - bal.plan)))
        monotone &= dual_is_monotone(bal.dual_history) and dual_is_monotone(unb.dual_history)
    return CheckResult(
        "balanced_limit",
        worst < atol and monotone,
        f"worst Frobenius gap {worst:.2e} (tau={tau:g}, eta={eta:g})",
        {"worst": worst, "monotone": monotone},
    )


def check_gradient(seed, trials=10, n=4, h=1e-5, rtol=1e-4):
    """Oracle gradient against central finite differences of the oracle objective."""
    rng = rng_for(seed)
    worst = 0.0
    for _ in range(trials):
        C = _random_cost(rng, n)
        alpha = rng.uniform(0.1, 1.0, n)
        beta = rng.uniform(0.1, 1.0, n)
        T = rng.uniform(0.05, 1.0, (n, n))
        eta = float(rng.choice([1e-2, 1e-1]))
        tau = float(rng.choice([0.1, 1.0, 10.0]))
        g = oracle.uot_gradient(T, C, alpha, beta, eta, tau)
        fd = np.empty_like(T)
        for idx in np.ndindex(T.shape):
            up, dn = T.copy(), T.copy()
            up[idx] += h
            dn[idx] -= h
            f_up = oracle.uot_objective(up, C, alpha, beta, eta, tau)
            f_dn = oracle.uot_objective(dn, C, alpha, beta, eta, tau)
            fd[idx] = (f_up - f_dn) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    return CheckResult(
        "gradient",
        worst <= rtol,
        f"worst relative gradient error {worst:.2e}",
        {"worst": worst},
    )


def check_plan_consistency(seed, trials=10, n=12, eta=1e-3, solvers=Solvers()):
    """Stored plans equal the plan rebuilt from the duals; primal matches dual."""
    rng = rng_for(seed)
    worst_plan, worst_gap = 0.0, 0.0
    for t in range(trials):
        C = _random_cost(rng, n)
        alpha = rng.uniform(0.1, 1.0, n)
        beta = rng.uniform(0.1, 1.0, n)
        if t % 2:
            beta *= alpha.sum() / beta.sum()
            sol = solvers.balanced(C, alpha, beta, SolverOptions(eta=eta))
            tau = math.inf
        else:
            tau = 1.0
            sol = solvers.unbalanced(C, alpha, beta, SolverOptions(eta=eta, tau=tau))
        rebuilt = plan_from_duals(sol.u, sol.v, C, alpha, beta, eta)
        scale = np.maximum(np.abs(rebuilt), 1e-300)
        worst_plan = max(worst_plan, float(np.max(np.abs(sol.plan - rebuilt) / scale)))
        p = primal_objective(sol.plan, C, alpha, beta, eta, tau)
        d = dual_objective(sol.u, sol.v, C, alpha, beta, eta, tau)
        worst_gap = max(worst_gap, abs(p - d) / max(abs(p), 1e-12))
    return CheckResult(
        "plan_consistency",
        worst_plan <= 1e-8 and worst_gap <= 1e-4,
        f"worst plan mismatch {worst_plan:.2e}, worst duality gap {worst_gap:.2e}",
        {"worst_plan": worst_plan, "worst_gap": worst_gap},
    )


def run_suite(seed: int = 0, n: int = 6, trials: int = 100, solvers: Solvers = Solvers()):
    """Run every check; ``n`` and ``trials`` size the assignment check."""
    yield check_assignment(seed, n=n, trials=trials, solvers=solvers)
    yield check_marginals(seed + 1, trials=20, solvers=solvers)
    yield check_uot_oracle(seed + 2, trials=12, solvers=solvers)
    yield check_balanced_limit(seed + 3, trials=5, solvers=solvers)
    yield check_gradient(seed + 4, trials=5)
    yield check_plan_consistency(seed + 5, trials=6, solvers=solvers)


def corrupted(solver: Solver, scale: float = 1.05) -> Solver:
    """Wrap a solver so its plan is off by a constant factor (negative control)."""

    def broken(C, alpha, beta, opts=None):
        sol = solver(C, alpha, beta, opts)
        sol.plan = sol.plan * scale
        return sol

    return broken
