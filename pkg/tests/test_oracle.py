import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from uft.errors import Diverged, ShapeMismatch, TooLarge
from uft.oracle import (
    PLAN_FLOOR,
    brute_force_assignment,
    uot_gradient,
    uot_objective,
    uot_projected_gradient,
)


def test_identity_favoring():
    C = 1.0 - np.eye(5)
    res = brute_force_assignment(C)
    assert res.permutation == (0, 1, 2, 3, 4)
    assert res.cost == 0.0


def test_two_by_two_and_ties():
    assert brute_force_assignment([[0, 1], [1, 0]]).permutation == (0, 1)
    assert brute_force_assignment(np.ones((3, 3))).permutation == (0, 1, 2)
    assert brute_force_assignment([[1, 0], [0, 1]]).permutation == (1, 0)


def test_assignment_errors():
    with pytest.raises(TooLarge):
        brute_force_assignment(np.zeros((9, 9)))
    with pytest.raises(ShapeMismatch):
        brute_force_assignment(np.zeros((2, 3)))


@given(arrays(np.float64, st.tuples(st.integers(1, 6)).map(lambda t: (t[0], t[0])),
              elements=st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0])))
def test_assignment_matches_recursive_search(C):
    n = C.shape[0]
    best = None
    # Independent search: depth-first over rows with lexicographic column order.
    def walk(row, used, acc, cost):
        nonlocal best
        if row == n:
            if best is None or cost < best[0]:
                best = (cost, tuple(acc))
            return
        for j in range(n):
            if j not in used:
                walk(row + 1, used | {j}, acc + [j], cost + C[row, j])
    walk(0, frozenset(), [], 0.0)
    res = brute_force_assignment(C)
    assert res.cost == pytest.approx(best[0], abs=1e-12)
    assert res.permutation == best[1]
    assert sorted(res.permutation) == list(range(n))


@pytest.mark.parametrize("tau", [0.5, 5.0])
def test_pg_single_cell_closed_form(tau):
    eta, c = 1e-2, 0.4
    T = uot_projected_gradient([[c]], [1.0], [1.0], eta, tau)
    assert T[0, 0] == pytest.approx(math.exp(-c / (2 * tau + eta)), abs=1e-4)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    r = np.random.default_rng(seed)
    C = 2 * r.random((4, 4))
    a, b = r.uniform(0.1, 1, 4), r.uniform(0.1, 1, 4)
    T = r.uniform(0.05, 1, (4, 4))
    eta, tau, h = 0.05, 2.0, 1e-5
    g = uot_gradient(T, C, a, b, eta, tau)
    for idx in itertools.product(range(4), range(4)):
        up, dn = T.copy(), T.copy()
        up[idx] += h
        dn[idx] -= h
        fd = (uot_objective(up, C, a, b, eta, tau) - uot_objective(dn, C, a, b, eta, tau)) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_pg_large_tau_follows_assignment_support():
    r = np.random.default_rng(3)
    n = 4
    C = 2 * r.random((n, n))
    a = np.full(n, 1.0 / n)
    # tau / eta = 1e5 makes the problem stiff; accepted steps stay near 1 / tau.
    T = uot_projected_gradient(C, a, a, 1e-2, 1e3, steps=150_000)
    perm = brute_force_assignment(C).permutation
    support = np.zeros((n, n), dtype=bool)
    support[np.arange(n), list(perm)] = True
    assert T[~support].sum() < 1e-2


def test_pg_positive_and_errors():
    r = np.random.default_rng(0)
    T = uot_projected_gradient(2 * r.random((3, 5)), np.ones(3), np.ones(5), 1e-2, 1.0)
    assert T.shape == (3, 5) and np.all(T >= PLAN_FLOOR)
    with pytest.raises(TooLarge):
        uot_projected_gradient(np.zeros((33, 32)), np.ones(33), np.ones(32), 1e-2, 1.0)
    with pytest.raises(ShapeMismatch):
        uot_projected_gradient(np.zeros((2, 2)), np.ones(3), np.ones(2), 1e-2, 1.0)
    with pytest.raises(ValueError):
        uot_projected_gradient(np.zeros((2, 2)), np.ones(2), np.ones(2), 1e-2, 1.0, step_size=0)


def test_pg_diverged_after_patience():
    C = np.array([[0.0, 2.0], [2.0, 0.0]])
    with pytest.raises(Diverged):
        uot_projected_gradient(C, np.ones(2), np.ones(2), 1e-2, 1.0, step_size=1e3, patience=1)


def test_objective_and_gradient_are_consistent_at_optimum():
    r = np.random.default_rng(8)
    C = 2 * r.random((5, 5))
    a, b = r.uniform(0.1, 1, 5), r.uniform(0.1, 1, 5)
    T = uot_projected_gradient(C, a, b, 1e-2, 1.0)
    g = uot_gradient(T, C, a, b, 1e-2, 1.0)
    # Interior optimum: the gradient vanishes; multiplicative steps move tiny
    # entries slowly, so weight the residual by the plan.
    assert np.max(np.abs(g * T)) < 1e-6
