import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uft.errors import EmptyRow, LengthMismatch, ShapeMismatch, ZeroNormFeature
from uft.losses import (
    MatchingReport,
    argmax_match_cosine,
    argmax_match_plan,
    contextual_loss,
    contextual_similarity,
    feature_consistency_loss,
    matching_report,
    many_to_one_rate,
    perceptual_distance,
    weighted_objective,
)
from uft.oracle import brute_force_assignment
from uft.sinkhorn import SolverOptions, solve_balanced
from uft.synth import SynthSpec, gen_clustered_pair

seeds = st.integers(0, 2**32 - 1)


def unit_rows(r, n, d):
    A = r.normal(size=(n, d))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def test_l1_trivial(rng):
    A = rng.normal(size=(3, 4))
    assert feature_consistency_loss(A, A) == 0.0
    assert feature_consistency_loss(A, A + 1) == pytest.approx(1.0)
    assert perceptual_distance(A, A) == 0.0
    assert perceptual_distance(A + 1, A) == pytest.approx(1.0)
    with pytest.raises(ShapeMismatch):
        feature_consistency_loss(A, A[:2])


@given(seeds)
def test_l1_matches_double_loop(seed):
    r = np.random.default_rng(seed)
    A, B = r.normal(size=(4, 5)), r.normal(size=(4, 5))
    total = 0.0
    for i in range(4):
        for j in range(5):
            total += abs(A[i, j] - B[i, j])
    assert feature_consistency_loss(A, B) == pytest.approx(total / 20, rel=1e-12)
    assert perceptual_distance(A, B) == feature_consistency_loss(A, B)


def test_contextual_single_element():
    assert contextual_similarity([[1.0, 2.0]], [[3.0, -1.0]]).tolist() == [[1.0]]
    assert contextual_loss([[1.0, 2.0]], [[3.0, -1.0]]) == 0.0


def naive_cx(Z, Y, h):
    n, m = len(Z), len(Y)
    d = [[1 - float(np.dot(Z[i], Y[j]) / (np.linalg.norm(Z[i]) * np.linalg.norm(Y[j])))
          for j in range(m)] for i in range(n)]
    d = [[min(max(x, 0.0), 2.0) for x in row] for row in d]
    out = []
    for row in d:
        lo = min(row)
        w = [math.exp((1 - x / (lo + 1e-5)) / h) for x in row]
        out.append([x / sum(w) for x in w])
    return np.array(out)


@given(seeds)
def test_contextual_similarity_matches_loops(seed):
    r = np.random.default_rng(seed)
    Z = r.normal(size=(4, 3))
    Y = r.normal(size=(5, 3))
    np.testing.assert_allclose(contextual_similarity(Z, Y, 0.5), naive_cx(Z, Y, 0.5), rtol=1e-9, atol=1e-300)


@given(seeds)
def test_contextual_permutation_beats_random(seed):
    r = np.random.default_rng(seed)
    Z = unit_rows(r, 12, 6)
    permuted = Z[r.permutation(12)]
    other = unit_rows(r, 12, 6)
    assert contextual_loss(Z, permuted) < contextual_loss(Z, other)
    assert contextual_loss(Z, permuted) == pytest.approx(contextual_loss(Z, Z), abs=1e-12)


@given(seeds)
def test_contextual_self_is_best(seed):
    r = np.random.default_rng(seed)
    Z = unit_rows(r, 8, 4)
    Y = unit_rows(r, 8, 4)
    assert contextual_loss(Z, Z) <= contextual_loss(Z, Y) + 1e-9


def test_contextual_errors():
    with pytest.raises(ZeroNormFeature):
        contextual_loss([[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(ValueError):
        contextual_loss([[1.0, 0.0]], [[1.0, 0.0]], h=0)


def test_weighted_objective():
    assert weighted_objective({"cyc": 2.0, "fc": 1.0}, {"cyc": 0.5, "fc": 3.0}) == 4.0
    with pytest.raises(KeyError):
        weighted_objective({"cyc": 2.0}, {})
    with pytest.raises(KeyError):
        weighted_objective({"cyc": 2.0}, {"cyc": 1.0, "adv": 1.0})


def test_argmax_cosine_examples():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    np.testing.assert_array_equal(argmax_match_cosine(Z, Z), [0, 1, 2])
    X = np.array([[0.9, 1.0], [1.0, 0.95]])
    np.testing.assert_array_equal(argmax_match_cosine(X, Z), [2, 2])
    with pytest.raises(ZeroNormFeature):
        argmax_match_cosine([[0.0, 0.0]], Z)


@pytest.mark.parametrize("seed", range(3))
def test_argmax_cosine_accuracy_matches_brute_force(seed):
    X, Z, lx, lz, mask = gen_clustered_pair(SynthSpec(30, 8, 3, 0.1, 0.3, seed))
    match = []
    for x in X:
        best, best_j = -np.inf, -1
        for j, z in enumerate(Z):
            sim = float(np.dot(x, z)) / (np.linalg.norm(x) * np.linalg.norm(z))
            if sim > best:
                best, best_j = sim, j
        match.append(best_j)
    np.testing.assert_array_equal(argmax_match_cosine(X, Z), match)
    naive_acc = sum(lx[i] == lz[j] for i, j in enumerate(match)) / 30
    assert matching_report(argmax_match_cosine(X, Z), lx, lz).accuracy == pytest.approx(naive_acc)


def test_argmax_plan_examples():
    P = np.eye(4)[[2, 0, 3, 1]]
    np.testing.assert_array_equal(argmax_match_plan(P), [2, 0, 3, 1])
    np.testing.assert_array_equal(argmax_match_plan(np.full((2, 3), 0.1)), [0, 0])
    with pytest.raises(EmptyRow):
        argmax_match_plan([[1.0, 0.0], [0.0, 1e-31]])
    with pytest.raises(ValueError):
        argmax_match_plan([[-1.0, 2.0]])


@pytest.mark.parametrize("seed", range(5))
def test_argmax_plan_recovers_assignment(seed):
    r = np.random.default_rng(seed)
    C = 2 * r.random((6, 6))
    u = np.full(6, 1 / 6)
    plan = solve_balanced(C, u, u, SolverOptions(eta=1e-3)).plan
    assert tuple(argmax_match_plan(plan).tolist()) == brute_force_assignment(C).permutation


def test_many_to_one_definition():
    assert many_to_one_rate([0, 1, 2, 3]) == 0.0
    assert many_to_one_rate([1, 1, 1, 1]) == 0.75
    assert many_to_one_rate([0, 0, 1]) == pytest.approx(1 / 3)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_many_to_one_bounds(match):
    rate = many_to_one_rate(match)
    assert 0.0 <= rate <= 1 - 1 / len(match)


def test_report_examples():
    labels = np.array([0, 1, 1, 2])
    rep = matching_report([0, 1, 2, 3], labels, labels)
    assert rep == MatchingReport(0.0, 0.0, 1.0)
    T = np.array([[0.5, 0.0, 0.0], [0.0, 0.5, 0.1]])
    mask = np.array([False, False, True])
    rep = matching_report([0, 1], [0, 1], [0, 1, 9], T, mask)
    assert rep.outlier_leakage == pytest.approx(0.1 / 1.1)
    clean = matching_report([0, 1], [0, 1], [0, 1, 9], T * [1, 1, 0], mask)
    assert clean.outlier_leakage == 0.0
    assert rep.to_text("uot.").splitlines()[1] == f"uot.outlier_leakage: {rep.outlier_leakage!r}"


def test_leakage_monotone_in_masked_mass():
    T = np.array([[0.5, 0.2], [0.3, 0.0]])
    mask = np.array([False, True])
    prev = -1.0
    for extra in [0.0, 0.1, 0.5, 2.0]:
        leak = matching_report([0, 0], [0, 0], [0, 1], T + [[0, extra], [0, 0]], mask).outlier_leakage
        assert leak > prev
        prev = leak


def test_report_length_errors():
    with pytest.raises(LengthMismatch):
        matching_report([0, 1], [0, 1, 2], [0, 1])
    with pytest.raises(LengthMismatch):
        matching_report([0, 5], [0, 1], [0, 1])
    with pytest.raises(LengthMismatch):
        matching_report([0, 1], [0, 1], [0, 1], np.ones((2, 2)), [True])
