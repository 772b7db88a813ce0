import numpy as np

from uft import verify
from uft.sinkhorn import solve_balanced, solve_unbalanced


def test_dual_is_monotone():
    assert verify.dual_is_monotone([0.0, 1.0, 1.0 - 1e-12, 2.0])
    assert not verify.dual_is_monotone([0.0, 1.0, 0.9])
    assert verify.dual_is_monotone([])


def test_check_line_format():
    line = verify.CheckResult("x", False, "detail").line()
    assert line == "FAIL x: detail"


def test_small_checks_pass():
    assert verify.check_assignment(0, trials=10).passed
    assert verify.check_marginals(1, trials=5, max_n=16).passed
    assert verify.check_uot_oracle(2, trials=3, max_n=6).passed
    assert verify.check_gradient(4, trials=2).passed
    assert verify.check_plan_consistency(5, trials=4).passed


def test_corrupted_solver_is_caught():
    broken = verify.Solvers(verify.corrupted(solve_balanced), verify.corrupted(solve_unbalanced))
    assert not verify.check_assignment(0, trials=5, solvers=broken).passed
    assert not verify.check_plan_consistency(5, trials=4, solvers=broken).passed


def test_checks_are_seeded():
    a = verify.check_marginals(3, trials=4, max_n=12)
    b = verify.check_marginals(3, trials=4, max_n=12)
    assert a.stats == b.stats
    assert np.isfinite(a.stats["worst"])
