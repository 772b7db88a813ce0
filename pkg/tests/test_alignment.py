import numpy as np
import pytest
from hypothesis import given, strategies as st

from uft.alignment import (
    FeaturePyramid,
    barycentric_warp,
    cycle_loss,
    expand_plan,
    multi_stage_transport,
)
from uft.errors import ResolutionMismatch, ShapeMismatch, UnsupportedScale
from uft.measures import compute_masses, cosine_cost_matrix
from uft.sinkhorn import SolverOptions, solve_balanced, solve_unbalanced
from uft.synth import SynthSpec, gen_clustered_pair

seeds = st.integers(0, 2**32 - 1)


def perm_matrix(perm):
    P = np.zeros((len(perm), len(perm)))
    P[np.arange(len(perm)), perm] = 1.0
    return P


def naive_warp(T, Z):
    out = np.zeros((T.shape[0], Z.shape[1]))
    for i in range(T.shape[0]):
        w = 0.0
        for j in range(T.shape[1]):
            out[i] += T[i, j] * Z[j]
            w += T[i, j]
        out[i] /= w + 1e-12
    return out


@given(seeds)
def test_permutation_warp_reorders(seed):
    r = np.random.default_rng(seed)
    perm = r.permutation(7)
    Z = r.normal(size=(7, 3))
    np.testing.assert_allclose(barycentric_warp(perm_matrix(perm), Z), Z[perm], rtol=1e-11)


def test_uniform_row_is_mean(rng):
    Z = rng.normal(size=(5, 2))
    T = np.vstack([np.full(5, 0.2), np.eye(5)[1]])
    np.testing.assert_allclose(barycentric_warp(T, Z)[0], Z.mean(axis=0), rtol=1e-10)


@given(seeds)
def test_warp_matches_loops(seed):
    r = np.random.default_rng(seed)
    T = r.random((4, 6))
    Z = r.normal(size=(6, 3))
    np.testing.assert_allclose(barycentric_warp(T, Z), naive_warp(T, Z), rtol=1e-12)


def test_warp_shape_error():
    with pytest.raises(ShapeMismatch):
        barycentric_warp(np.ones((2, 3)), np.ones((2, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_warp_hull_bounds_on_solved_plan(seed):
    X, Z, *_ = gen_clustered_pair(SynthSpec(40, 8, 3, 0.0, 0.1, seed))
    C = cosine_cost_matrix(X, Z)
    a = np.full(40, 1 / 40)
    T = solve_balanced(C, a, a, SolverOptions(eta=1e-3)).plan
    W = barycentric_warp(T, Z)
    assert np.all(W >= Z.min(axis=0) - 1e-12) and np.all(W <= Z.max(axis=0) + 1e-12)


def test_expand_single_cell():
    E = expand_plan([[2.0]], 2)
    np.testing.assert_allclose(E, np.full((4, 4), 2.0 / 16))
    assert E.sum() == pytest.approx(2.0)


@pytest.mark.parametrize("s", [2, 4])
def test_expand_marginals_and_mass(rng, s):
    T = rng.random((4, 9))
    E = expand_plan(T, s)
    assert E.shape == (4 * s * s, 9 * s * s)
    assert E.sum() == pytest.approx(T.sum(), rel=1e-12)
    fine_rows = E.sum(axis=1).reshape(2, s, 2, s)
    np.testing.assert_allclose(fine_rows, np.broadcast_to(
        (T.sum(axis=1) / s**2).reshape(2, 1, 2, 1), fine_rows.shape), rtol=1e-12)


def test_expand_errors(rng):
    with pytest.raises(UnsupportedScale):
        expand_plan(np.ones((4, 4)), 3)
    with pytest.raises(ResolutionMismatch):
        expand_plan(np.ones((3, 4)), 2)
    E = expand_plan(np.ones((2, 3)), 2, grid_x=(1, 2), grid_z=(3, 1))
    assert E.shape == (8, 12)


def block_up(level, s):
    return np.repeat(np.repeat(level, s, axis=0), s, axis=1)


@pytest.mark.parametrize("s", [2, 4])
def test_expanded_warp_on_block_constant_equals_base(rng, s):
    T = rng.random((4, 4))
    coarse = rng.normal(size=(2, 2, 3))
    fine = block_up(coarse, s)
    lhs = barycentric_warp(expand_plan(T, s), fine.reshape(-1, 3))
    rhs = block_up(barycentric_warp(T, coarse.reshape(-1, 3)).reshape(2, 2, 3), s)
    np.testing.assert_allclose(lhs, rhs.reshape(-1, 3), rtol=1e-10)


@given(seeds)
def test_multi_stage_matches_explicit_expansion(seed):
    r = np.random.default_rng(seed)
    T = r.random((4, 4)) * (r.random((4, 4)) > 0.3)
    levels = [r.normal(size=(2 << k, 2 << k, 3)) for k in range(3)]
    out = multi_stage_transport(T, FeaturePyramid(levels, 2, 2))
    np.testing.assert_allclose(out.levels[0].reshape(-1, 3), barycentric_warp(T, levels[0].reshape(-1, 3)))
    for k in (1, 2):
        s = 1 << k
        want = barycentric_warp(expand_plan(T, s), levels[k].reshape(-1, 3))
        np.testing.assert_allclose(out.levels[k].reshape(-1, 3), want, rtol=1e-9, atol=1e-12)


def test_multi_stage_constant_fixed_point(rng):
    T = rng.random((4, 4)) + 0.1
    levels = [np.full((2 << k, 2 << k, 2), 3.5) for k in range(3)]
    out = multi_stage_transport(T, FeaturePyramid(levels, 2, 2))
    for level in out.levels:
        np.testing.assert_allclose(level, 3.5, rtol=1e-11)


def test_multi_stage_errors(rng):
    with pytest.raises(ResolutionMismatch):
        FeaturePyramid([np.ones((2, 2, 1)), np.ones((3, 4, 1))], 2, 2)
    with pytest.raises(ResolutionMismatch):
        multi_stage_transport(np.ones((3, 3)), FeaturePyramid([np.ones((2, 2, 1))], 2, 2))
    levels = [np.ones((1 << k, 1 << k, 1)) for k in range(4)]
    with pytest.raises(UnsupportedScale):
        multi_stage_transport(np.ones((1, 1)), FeaturePyramid(levels, 1, 1))


@given(seeds)
def test_cycle_loss_zero_for_permutations(seed):
    r = np.random.default_rng(seed)
    perm = r.permutation(9)
    Z = r.normal(size=(9, 4))
    assert cycle_loss(perm_matrix(perm) * r.uniform(0.1, 3), Z) == 0.0


def test_cycle_loss_uniform_plan_annihilates_zero_mean(rng):
    Z = rng.normal(size=(6, 3))
    Z -= Z.mean(axis=0)
    assert cycle_loss(np.ones((6, 6)), Z) == pytest.approx(np.mean(np.abs(Z)), rel=1e-12)


def test_cycle_loss_uot_beats_uniform():
    X, Z, *_ = gen_clustered_pair(SynthSpec(30, 8, 3, 0.0, 0.05, 4))
    C = cosine_cost_matrix(X, Z)
    a, b = compute_masses(X, Z)
    T = solve_unbalanced(C, a, b, SolverOptions(eta=1e-3)).plan
    assert cycle_loss(T, Z) < cycle_loss(np.ones_like(T), Z)
    assert cycle_loss(T, Z) >= 0


def test_cycle_loss_shape_error():
    with pytest.raises(ShapeMismatch):
        cycle_loss(np.ones((2, 3)), np.ones((2, 2)))
