import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import sdp_value
from sosmult.sdp import SdpProblem, SdpStatus, SdpTolerances, conjugate, planted_instance, ray_is_valid, \
    solve_sdp, trace_iterates


def check_optimal(problem, sol, tol=1e-8):
    assert sol.status == SdpStatus.OPTIMAL, sol.message
    assert np.allclose(sol.X, sol.X.T)
    assert np.linalg.eigvalsh(sol.X)[0] >= -1e-9
    assert np.max(np.abs(problem.apply(sol.X) - problem.b)) <= tol
    assert sol.gap <= 1e-8


def test_trace_constraint_minimizes_smallest_eigenvalue():
    p = SdpProblem.from_constraints(np.diag([1.0, 2.0]), [(np.eye(2), 1.0)])
    sol = solve_sdp(p)
    check_optimal(p, sol)
    assert sol.objective_value == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(sol.X, [[1, 0], [0, 0]], atol=1e-6)


def test_negative_trace_is_infeasible_with_checked_ray():
    p = SdpProblem.from_constraints(np.diag([1.0, 2.0]), [(np.eye(2), -1.0)])
    sol = solve_sdp(p)
    assert sol.status == SdpStatus.INFEASIBLE
    ray = sol.infeasibility_certificate
    assert ray_is_valid(p, ray)
    assert float(p.b @ ray) < 0
    assert np.linalg.eigvalsh(p.adjoint(ray))[0] >= 1e-9


def test_margin_problem_of_x1_4_plus_x2_4():
    from sosmult.forms import parse_form
    from sosmult.sos import margin_problem
    sol = solve_sdp(margin_problem(parse_form("x1^4+x2^4", 2)))
    assert sol.status == SdpStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(2 / 3, abs=1e-7)


def test_maximize_sense():
    p = SdpProblem.from_constraints(np.diag([1.0, 2.0]), [(np.eye(2), 1.0)], sense="maximize")
    sol = solve_sdp(p)
    assert sol.status == SdpStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(2.0, abs=1e-8)


def test_unbounded_problem_is_reported():
    # minimize -x11 with x22 = 1: x11 can grow without bound
    C = np.diag([-1.0, 0.0])
    p = SdpProblem.from_constraints(C, [(np.diag([0.0, 1.0]), 1.0)])
    sol = solve_sdp(p)
    assert sol.status in (SdpStatus.UNBOUNDED, SdpStatus.INDETERMINATE)
    assert sol.status != SdpStatus.OPTIMAL


def test_dependent_constraints_are_dropped():
    A1 = np.diag([1.0, 0.0])
    p = SdpProblem.from_constraints(np.eye(2), [(A1, 0.5), (2 * A1, 1.0), (np.eye(2), 1.0)])
    sol = solve_sdp(p)
    check_optimal(p, sol)
    assert sol.objective_value == pytest.approx(1.0, abs=1e-8)


def test_inconsistent_linear_constraints_are_infeasible():
    A1 = np.diag([1.0, 0.0])
    p = SdpProblem.from_constraints(np.eye(2), [(A1, 0.5), (A1, 0.7)])
    sol = solve_sdp(p)
    assert sol.status == SdpStatus.INFEASIBLE
    y = sol.infeasibility_certificate
    assert float(p.b @ y) < 0
    assert np.max(np.abs(p.adjoint(y))) <= 1e-9 * max(1, np.max(np.abs(y)))


@pytest.mark.parametrize("bad", ["nan", "asym"])
def test_invalid_input_rejected(bad):
    C = np.eye(2)
    A = np.eye(2)
    if bad == "nan":
        C = np.array([[np.nan, 0], [0, 1.0]])
    else:
        A = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        solve_sdp(SdpProblem.from_constraints(C, [(A, 1.0)]))


def test_max_iter_exhaustion_is_indeterminate():
    p, _ = planted_instance(8, 20, np.random.default_rng(3))
    sol = solve_sdp(p, SdpTolerances(max_iter=2))
    assert sol.status == SdpStatus.INDETERMINATE


def test_tolerances_from_environment():
    t = SdpTolerances.from_env({"SOSMULT_SDP_TOLS": "feas_tol=1e-8, max_iter=50"})
    assert t == SdpTolerances(feas_tol=1e-8, gap_tol=1e-8, max_iter=50)
    assert SdpTolerances.from_env({}) == SdpTolerances()
    with pytest.raises(ValueError):
        SdpTolerances.from_env({"SOSMULT_SDP_TOLS": "speed=3"})


def test_trace_dump_writes_tab_separated_floats():
    p, _ = planted_instance(4, 5, np.random.default_rng(0))
    buf = io.StringIO()
    with trace_iterates(buf):
        sol = solve_sdp(p)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) >= sol.iterations
    assert all(len([float(x) for x in line.split("\t")]) == 9 for line in lines)


@pytest.mark.parametrize("seed", range(30))
def test_planted_instances_solve(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 36))
    k = int(rng.integers(1, min(200, m * (m + 1) // 2) + 1))
    p, X0 = planted_instance(m, k, rng)
    sol = solve_sdp(p)
    check_optimal(p, sol)
    assert sol.objective_value <= float(np.sum(p.C * X0)) + 1e-7


@pytest.mark.parametrize("seed", range(8))
def test_planted_instances_match_cvxpy(seed):
    rng = np.random.default_rng(100 + seed)
    m = int(rng.integers(2, 9))
    k = int(rng.integers(1, m * (m + 1) // 2 + 1))
    p, _ = planted_instance(m, k, rng, sense="maximize" if seed % 2 else "minimize")
    sol = solve_sdp(p)
    assert sol.status == SdpStatus.OPTIMAL
    ref = sdp_value(p.C, p.A, p.b, p.sense)
    assert sol.objective_value == pytest.approx(ref, rel=1e-6, abs=1e-6)


@settings(max_examples=20)
@given(st.integers(0, 10 ** 6), st.integers(2, 10))
def test_orthogonal_conjugation_invariance(seed, m):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, m * (m + 1) // 2 + 1))
    p, _ = planted_instance(m, k, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    a, b = solve_sdp(p), solve_sdp(conjugate(p, Q))
    assert a.status == b.status == SdpStatus.OPTIMAL
    assert b.objective_value == pytest.approx(a.objective_value, rel=1e-6, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10 ** 6), st.integers(1, 12))
def test_planted_feasible_never_infeasible(seed, m):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, m * (m + 1) // 2 + 1))
    p, _ = planted_instance(m, k, rng)
    assert solve_sdp(p).status != SdpStatus.INFEASIBLE
