import numpy as np
import pytest

from se3track.errors import Infeasible
from se3track.sdp import solve_trace_sdp


def lift_1d(q, c, beta):
    """1-D box-constrained quadratic max q x^2 + 2 c x, |x|^2 <= beta, lifted
    to a 2x2 SDP whose relaxation is tight (trust-region subproblem)."""
    C = np.array([[q, c], [c, 0.0]])
    a1 = np.diag([1.0 / beta, 0.0])
    a_eq = np.diag([0.0, 1.0])
    return C, [a1], np.array([1.0]), a_eq, 1.0


def analytic_1d_max(q, c, beta):
    xs = [-np.sqrt(beta), np.sqrt(beta)]
    if q < 0 and abs(c / q) <= np.sqrt(beta):
        xs.append(-c / q)
    return max(q * x * x + 2 * c * x for x in xs)


def test_zero_objective():
    C = np.zeros((3, 3))
    a1 = np.diag([1.0, 1.0, 0.0])
    a_eq = np.diag([0.0, 0.0, 1.0])
    sol = solve_trace_sdp(C, [a1], np.array([1.0]), a_eq, 1.0)
    assert abs(sol.objective) < 1e-8
    assert abs(sol.upper_bound) < 1e-6
    assert sol.Z[2, 2] == pytest.approx(1.0, abs=1e-8)


def test_one_dimensional_surrogate_matches_analytic():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = rng.uniform(-2.0, 2.0)
        c = rng.uniform(-2.0, 2.0)
        beta = rng.uniform(0.5, 4.0)
        sol = solve_trace_sdp(*lift_1d(q, c, beta), tol=1e-9)
        expect = analytic_1d_max(q, c, beta)
        assert sol.upper_bound >= expect - 1e-6
        assert abs(sol.objective - expect) < 1e-5 * max(1.0, abs(expect))


def test_duality_gap_below_tolerance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.standard_normal((4, 4))
        C = a + a.T
        ineq = [np.diag(v) for v in np.eye(4)[:3]]
        a_eq = np.diag([0.0, 0, 0, 1.0])
        sol = solve_trace_sdp(C, ineq, np.ones(3), a_eq, 1.0, tol=1e-7)
        assert sol.gap < 1e-7 * max(1.0, np.abs(C).max())
        assert np.all(np.linalg.eigvalsh(sol.Z) > -1e-12)


def test_upper_bound_dominates_feasible_points():
    # bound must certify every feasible rank-one point
    rng = np.random.default_rng(2)
    a = rng.standard_normal((3, 3))
    C3 = a + a.T
    C = np.zeros((4, 4))
    C[:3, :3] = C3
    ineq = [np.diag([1.0, 1, 1, 0]) / 2.0]
    a_eq = np.diag([0.0, 0, 0, 1.0])
    sol = solve_trace_sdp(C, ineq, np.ones(1), a_eq, 1.0)
    for _ in range(2000):
        x = rng.standard_normal(3)
        x *= rng.uniform(0, 1) * np.sqrt(2.0) / np.linalg.norm(x)
        assert x @ C3 @ x <= sol.upper_bound + 1e-9


def test_primal_point_is_feasible():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4))
    C = a + a.T
    ineq = [np.diag([2.0, 1, 0, 0]), np.diag([0.0, 0, 3.0, 0])]
    a_eq = np.diag([0.0, 0, 0, 1.0])
    sol = solve_trace_sdp(C, ineq, np.ones(2), a_eq, 1.0)
    for mat in ineq:
        assert np.sum(mat * sol.Z) <= 1.0 + 1e-9
    assert np.sum(a_eq * sol.Z) == pytest.approx(1.0, abs=1e-8)


def test_infeasible_start_detection():
    # no multiplier combination can make S(y) PD when the A_i leave a
    # direction uncovered and C is positive there
    C = np.diag([0.0, 1.0])
    a1 = np.diag([1.0, 0.0])
    a_eq = np.diag([1.0, 0.0])
    with pytest.raises(Infeasible):
        solve_trace_sdp(C, [a1], np.array([1.0]), a_eq, 1.0)
