import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from rompc.solvers import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, QpWorkspace, QuadraticProgram,
                           projected_gradient_norm, solve_lp, solve_qp)


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_lp_examples(method):
    res = solve_lp(LinearProgram([1.0], lb=[-1.0], ub=[2.0]), method=method)
    assert res.status == OPTIMAL and res.objective == pytest.approx(2.0) and res.x[0] == pytest.approx(2.0)
    res = solve_lp(LinearProgram([1.0], lb=[0.0]), method=method)
    assert res.status == UNBOUNDED
    res = solve_lp(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [1.0], lb=[0, 0]), method=method)
    assert res.status == OPTIMAL and res.objective == pytest.approx(1.0)
    assert np.all(res.x >= -1e-12) and res.x.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_lp_infeasible(method):
    res = solve_lp(LinearProgram([1.0], [[1.0], [-1.0]], [-1.0, -1.0]), method=method)
    assert res.status == INFEASIBLE


def test_lp_equality_rows():
    # max x + 2y  s.t. x + y = 1, 0 <= x, y <= 0.7
    res = solve_lp(LinearProgram([1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0], lb=[0, 0], ub=[0.7, 0.7]),
                   method="simplex")
    assert res.ok and np.allclose(res.x, [0.3, 0.7])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 12), st.integers(0, 2 ** 31 - 1))
def test_simplex_matches_highs_oracle(n, q, seed):
    r = np.random.default_rng(seed)
    A = r.normal(size=(q, n))
    b = r.uniform(0.1, 2.0, q)  # origin strictly feasible
    c = r.normal(size=n)
    lb, ub = -r.uniform(0.5, 3, n), r.uniform(0.5, 3, n)
    res = solve_lp(LinearProgram(c, A, b, lb=lb, ub=ub), method="simplex")
    ref = linprog(-c, A_ub=A, b_ub=b, bounds=list(zip(lb, ub)), method="highs")
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(-ref.fun, abs=1e-7 * (1 + abs(ref.fun)))
    assert np.all(A @ res.x <= b + 1e-8)


def test_qp_examples():
    res = solve_qp(QuadraticProgram([[2.0]], [-2.0]))
    assert res.ok and res.x[0] == pytest.approx(1.0, abs=1e-6)
    res = solve_qp(QuadraticProgram([[2.0]], [-2.0], [[1.0]], [0.5]))
    assert res.ok and res.x[0] == pytest.approx(0.5, abs=1e-6)


def test_qp_infeasible():
    res = solve_qp(QuadraticProgram([[2.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0]))
    assert res.status == INFEASIBLE


def _kkt_oracle(P, q, A, b, active):
    """Equality-constrained KKT solve on a given active set."""
    Aa = A[active]
    n, k = P.shape[0], Aa.shape[0]
    K = np.block([[P, Aa.T], [Aa, np.zeros((k, k))]])
    sol = np.linalg.solve(K, np.concatenate([-q, b[active]]))
    return sol[:n], sol[n:]


def test_qp_matches_kkt_oracle():
    r = np.random.default_rng(7)
    n = 10
    M = r.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    # plant a solution with exactly five active rows
    x_star = r.normal(size=n)
    A = r.normal(size=(8, n))
    lam = np.concatenate([r.uniform(0.5, 2.0, 5), np.zeros(3)])
    b = A @ x_star + np.concatenate([np.zeros(5), r.uniform(0.5, 2.0, 3)])
    q = -P @ x_star - A.T @ lam
    res = solve_qp(QuadraticProgram(P, q, A, b), tol=1e-9)
    active = np.where(b - A @ res.x <= 1e-6)[0]
    assert active.tolist() == [0, 1, 2, 3, 4]
    x_kkt, mult = _kkt_oracle(P, q, A, b, active)
    assert np.all(mult >= 0)
    assert np.allclose(res.x, x_kkt, atol=1e-5)
    assert np.allclose(x_kkt, x_star, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 15), st.integers(0, 2 ** 31 - 1))
def test_qp_optimality_property(n, q, seed):
    r = np.random.default_rng(seed)
    M = r.normal(size=(n, n))
    P = M @ M.T + 0.1 * np.eye(n)
    A = r.normal(size=(q, n))
    b = r.uniform(0.1, 1.0, q)
    qp = QuadraticProgram(P, r.normal(size=n) * 5, A, b)
    res = solve_qp(qp, tol=1e-8)
    assert res.ok
    assert np.all(A @ res.x <= b + 1e-6)
    assert projected_gradient_norm(qp, res.x, tol=1e-6) <= 1e-5 * (1 + np.linalg.norm(qp.q))


def test_workspace_warm_start_reuses_factorization():
    r = np.random.default_rng(3)
    n = 6
    M = r.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    A = np.vstack([np.eye(n), -np.eye(n)])
    ws = QpWorkspace(P, A)
    lo, hi = np.full(2 * n, -np.inf), np.ones(2 * n)
    first = ws.solve(r.normal(size=n) * 4, lo, hi)
    again = ws.solve(first.x * 0 + r.normal(size=n) * 4, lo, hi, x0=first.x, y0=first.dual)
    assert first.ok and again.ok
    assert len(ws._cache) >= 1
