import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rompc.geometry import Polytope
from rompc.linalg_core import solve_dare
from rompc.ocp import (OcpError, OcpSpec, TerminalSetError, build_qp, regularize_cost, solve_ocp,
                       terminal_ingredients)
from rompc.solvers import INFEASIBLE, OPTIMAL
from rompc.system import StateSpaceModel

from conftest import scalar_model


def _two_state(dt=0.1):
    A = np.array([[1.0, 0.1], [0.0, 0.95]])
    return StateSpaceModel(A, [[0.005], [0.1]], [[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], dt=dt)


def _two_state_spec(N=10, zlim=(1.0, 2.0), ulim=1.0, target=None):
    rom = _two_state()
    Q, R = np.eye(2), np.array([[0.1]])
    Zb = Polytope.box([-zlim[0], -zlim[1]], list(zlim))
    Ub = Polytope.box([-ulim], [ulim])
    P, K_f, X_f = terminal_ingredients(rom, Q, R, Zb, Ub, target)
    return OcpSpec(rom, Zb, Ub, Q, R, P, X_f, N, target), K_f


def _sample_in(S, rng, count):
    lo, hi = S.bounding_box()
    pts = []
    while len(pts) < count:
        x = rng.uniform(lo, hi)
        if S.contains(x):
            pts.append(x)
    return np.array(pts)


# ---------------------------------------------------------------- terminal ingredients

def test_scalar_terminal_set_symmetric():
    rom = scalar_model(0.5, 1.0)
    box = Polytope.box([-1.0], [1.0])
    P, K_f, X_f = terminal_ingredients(rom, np.eye(1), np.eye(1), box, box)
    lo, hi = X_f.bounding_box()
    assert lo[0] == pytest.approx(-hi[0], abs=1e-12)
    assert lo[0] < 0 < hi[0]
    assert P[0, 0] == pytest.approx(solve_dare(np.array([[0.5]]), np.eye(1), np.eye(1), np.eye(1))[0, 0])


def test_terminal_set_invariance_by_sampling(rng):
    spec, K_f = _two_state_spec()
    A_cl = spec.rom.A + spec.rom.B @ K_f
    for x in _sample_in(spec.X_f, rng, 100):
        assert spec.X_f.contains(A_cl @ x, tol=1e-9)
        assert spec.Zbar.contains(spec.rom.H @ x, tol=1e-9)
        assert spec.Ubar.contains(K_f @ x, tol=1e-9)


def test_terminal_set_around_target(rng):
    x_t = np.array([0.3, 0.0])
    spec, K_f = _two_state_spec(target=(x_t, np.zeros(1)))
    assert spec.X_f.contains(x_t)
    A_cl = spec.rom.A + spec.rom.B @ K_f
    for x in _sample_in(spec.X_f, rng, 50):
        assert spec.X_f.contains(A_cl @ (x - x_t) + x_t, tol=1e-9)


def test_empty_tightened_set_rejected():
    rom = scalar_model(0.5, 1.0)
    empty = Polytope(np.array([[1.0], [-1.0]]), np.array([-0.1, -0.1]))
    with pytest.raises(TerminalSetError):
        terminal_ingredients(rom, np.eye(1), np.eye(1), empty, Polytope.box([-1.0], [1.0]))


def test_target_outside_tightened_sets():
    rom = scalar_model(0.5, 1.0)
    box = Polytope.box([-1.0], [1.0])
    with pytest.raises(TerminalSetError, match="outside"):
        terminal_ingredients(rom, np.eye(1), np.eye(1), box, box, target=([2.0], [1.0]))


def test_regularize_cost():
    Q = np.diag([1.0, 0.0])
    assert np.array_equal(regularize_cost(Q, 1e-3), np.diag([1.0 + 1e-3, 1e-3]))
    assert np.array_equal(regularize_cost(np.eye(2)), np.eye(2))


# ---------------------------------------------------------------- build_qp / solve_ocp

def test_one_step_closed_form():
    a, b, q, r, p = 0.8, 0.5, 2.0, 0.3, 5.0
    rom = scalar_model(a, b)
    big = Polytope.box([-100.0], [100.0])
    spec = OcpSpec(rom, big, big, [[q]], [[r]], [[p]], big, N=1)
    x0 = 0.7
    sol = solve_ocp(spec, [x0])
    u_star = -p * a * b * x0 / (r + p * b * b)
    assert sol.ok
    assert sol.u0[0] == pytest.approx(u_star, abs=1e-6)
    cost = q * x0 ** 2 + r * u_star ** 2 + p * (a * x0 + b * u_star) ** 2
    assert sol.cost == pytest.approx(cost, rel=1e-8)
    qp = build_qp(spec, [x0])
    assert qp.objective(np.array([u_star])) + qp.offset == pytest.approx(cost, rel=1e-12)


def test_target_start_has_zero_cost():
    rom = scalar_model(0.5, 1.0)
    x_t, u_t = np.array([0.4]), np.array([0.2])
    box = Polytope.box([-1.0], [1.0])
    P, _, X_f = terminal_ingredients(rom, np.eye(1), np.eye(1), box, box, (x_t, u_t))
    spec = OcpSpec(rom, box, box, np.eye(1), np.eye(1), P, X_f, N=5, target=(x_t, u_t))
    sol = solve_ocp(spec, x_t)
    assert sol.ok
    assert sol.cost == pytest.approx(0.0, abs=1e-10)
    assert np.allclose(sol.u_pred, 0.2, atol=1e-6)


def test_start_outside_state_constraints_infeasible():
    spec, _ = _two_state_spec()
    sol = solve_ocp(spec, [5.0, 0.0])
    assert sol.status.status == INFEASIBLE and not sol.ok


def test_start_outside_feasible_tube_infeasible():
    rom = scalar_model(1.5, 1.0)
    Zb, Ub = Polytope.box([-10.0], [10.0]), Polytope.box([-0.1], [0.1])
    P, _, X_f = terminal_ingredients(rom, np.eye(1), np.eye(1), Zb, Ub)
    spec = OcpSpec(rom, Zb, Ub, np.eye(1), np.eye(1), P, X_f, N=5)
    assert solve_ocp(spec, [5.0]).status.status == INFEASIBLE


def test_long_horizon_matches_lqr_gain(rng):
    spec, K_f = _two_state_spec(N=50, zlim=(1e3, 1e3), ulim=1e3)
    for _ in range(5):
        x0 = rng.uniform(-1, 1, 2)
        sol = solve_ocp(spec, x0)
        assert sol.ok
        assert np.allclose(sol.u0, K_f @ x0, atol=1e-4)


def test_terminal_set_start_cost_below_terminal_cost(rng):
    spec, _ = _two_state_spec()
    for x0 in _sample_in(spec.X_f, rng, 20):
        sol = solve_ocp(spec, x0)
        assert sol.ok
        assert sol.cost <= x0 @ spec.P @ x0 + 1e-6 * (1 + x0 @ spec.P @ x0)


def test_warm_start_same_solution(rng):
    spec, _ = _two_state_spec()
    x0 = np.array([0.5, -0.5])
    first = solve_ocp(spec, x0)
    x1 = first.x_pred[1]
    cold, warm = solve_ocp(spec, x1), solve_ocp(spec, x1, warm_start=first)
    assert np.allclose(cold.u_pred, warm.u_pred, atol=1e-5)


def test_dimension_errors():
    spec, _ = _two_state_spec()
    with pytest.raises(OcpError, match="dimension mismatch"):
        build_qp(spec, [1.0])
    with pytest.raises(OcpError, match="dimension mismatch"):
        OcpSpec(spec.rom, spec.Zbar, spec.Ubar, np.eye(3), spec.R, spec.P, spec.X_f)


def test_equality_terminal_reaches_target():
    rom = _two_state()
    box2, box1 = Polytope.box([-5.0, -5.0], [5.0, 5.0]), Polytope.box([-5.0], [5.0])
    P = solve_dare(rom.A, rom.B, np.eye(2), np.eye(1))
    spec = OcpSpec(rom, box2, box1, np.eye(2), np.eye(1), P, None, N=20, terminal="equality")
    sol = solve_ocp(spec, [0.5, 0.2])
    assert sol.ok
    assert np.allclose(sol.x_pred[-1], 0.0, atol=1e-5)


# ---------------------------------------------------------------- closed-loop properties

_SPEC = None


def _shared_spec():
    global _SPEC
    if _SPEC is None:
        _SPEC = _two_state_spec(N=10)[0]
    return _SPEC


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-1.8, 1.8))
def test_recursive_feasibility_and_cost_decrease(a, b):
    spec = _shared_spec()
    x = np.array([a, b])
    sol = solve_ocp(spec, x)
    if not sol.ok:
        return
    prev = sol.cost
    for _ in range(40):
        x = spec.rom.A @ x + spec.rom.B @ sol.u0
        sol = solve_ocp(spec, x, warm_start=sol)
        assert sol.status.status == OPTIMAL
        assert sol.cost <= prev + 1e-6 * (1 + prev)
        prev = sol.cost
