"""Strictly convex QP by operator splitting (ADMM) with active-set polishing."""
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import _kernels
from .lp import INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED, SolveStatus

QP_MAX_ITER = 20_000
_BIG = 1e20
_EQ_RHO_SCALE = 1e3


@dataclass
class QuadraticProgram:
    """minimize 1/2 x'Px + q'x  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq."""

    P: np.ndarray
    q: np.ndarray
    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None

    def __post_init__(self):
        self.P = _dense(self.P)
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        if self.P.shape != (n, n):
            raise ValueError(f"QuadraticProgram: P has shape {self.P.shape}, expected ({n}, {n})")
        if not np.allclose(self.P, self.P.T, atol=1e-10 * (1 + np.abs(self.P).max(initial=0))):
            raise ValueError("QuadraticProgram: P must be symmetric")
        self.P = 0.5 * (self.P + self.P.T)
        self.A_ineq, self.b_ineq = _block(self.A_ineq, self.b_ineq, n)
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n)

    @property
    def n(self):
        return self.q.size

    def stacked(self):
        """Constraints as l <= A x <= u with equality rows last."""
        A = np.vstack([self.A_ineq, self.A_eq])
        lo = np.concatenate([np.full(self.b_ineq.size, -np.inf), self.b_eq])
        hi = np.concatenate([self.b_ineq, self.b_eq])
        return A, lo, hi

    def objective(self, x):
        return float(0.5 * x @ self.P @ x + self.q @ x)


def _dense(M):
    return M.toarray().astype(float) if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))


def _block(A, b, n):
    if A is None or np.size(A) == 0:
        return np.zeros((0, n)), np.zeros(0)
    A = _dense(A)
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (b.size, n):
        raise ValueError(f"QuadraticProgram: constraint block {A.shape} does not match ({b.size}, {n})")
    return A, b


class QpWorkspace:
    """Factorization cache for a fixed (P, A) pair solved with varying q, l, u.

    The ADMM linear system (P + sigma I + A' diag(rho) A) is inverted once per
    penalty level and reused across solves, which is what makes repeated MPC
    solves cheap.  Penalties are adapted between chunks of iterations from the
    ratio of primal to dual residuals.
    """

    def __init__(self, P, A, eq_mask=None, sigma=1e-6, alpha=1.6, rho=0.1,
                 max_iter=QP_MAX_ITER, check_every=25, adapt_every=200):
        self.P = np.ascontiguousarray(P, dtype=float)
        self.A = np.ascontiguousarray(A, dtype=float)
        self.n = self.P.shape[0]
        self.m = self.A.shape[0]
        self.eq_mask = np.zeros(self.m, dtype=bool) if eq_mask is None else np.asarray(eq_mask, dtype=bool)
        self.sigma = sigma
        self.alpha = alpha
        self.rho0 = rho
        self.rho_bar = rho
        self.max_iter = max_iter
        self.check_every = check_every
        self.adapt_every = adapt_every
        self._cache = {}

    def _rho_vec(self, rho_bar):
        r = np.full(self.m, rho_bar)
        r[self.eq_mask] *= _EQ_RHO_SCALE
        return r

    def _kinv(self, rho_bar):
        key = round(float(np.log10(rho_bar)), 3)
        if key not in self._cache:
            r = self._rho_vec(rho_bar)
            K = self.P + self.sigma * np.eye(self.n) + self.A.T @ (r[:, None] * self.A)
            self._cache[key] = np.ascontiguousarray(np.linalg.inv(K))
            if len(self._cache) > 32:
                self._cache.pop(next(iter(self._cache)))
        return self._cache[key]

    def solve(self, q, lo, hi, tol=1e-6, x0=None, y0=None, polish=True):
        t0 = time.perf_counter()
        q = np.ascontiguousarray(q, dtype=float)
        l = np.clip(np.asarray(lo, dtype=float), -_BIG, _BIG)
        u = np.clip(np.asarray(hi, dtype=float), -_BIG, _BIG)
        if np.any(l > u + tol):
            return SolveStatus(INFEASIBLE, solve_time=time.perf_counter() - t0)
        x = np.zeros(self.n) if x0 is None else np.array(x0, dtype=float)
        y = np.zeros(self.m) if y0 is None else np.array(y0, dtype=float)
        z = np.clip(self.A @ x, l, u)
        rho_bar = self.rho_bar
        total = 0
        status = _kernels.ADMM_MAX_ITER
        while total < self.max_iter:
            chunk = min(self.adapt_every, self.max_iter - total)
            rho = self._rho_vec(rho_bar)
            status, it = _kernels.admm_loop(self._kinv(rho_bar), self.P, q, self.A, l, u, rho,
                                            self.sigma, self.alpha, x, z, y, chunk, tol, tol,
                                            1e-5, 1e-5, self.check_every)
            total += it
            if status != _kernels.ADMM_MAX_ITER:
                break
            new = self._adapt(rho_bar, q, x, z, y)
            if new is not None:
                rho_bar = new
        self.rho_bar = rho_bar
        info = {"admm_iterations": total, "rho": rho_bar, "polished": False}
        if status == _kernels.ADMM_PRIMAL_INFEASIBLE:
            return SolveStatus(INFEASIBLE, iterations=total, solve_time=time.perf_counter() - t0, info=info)
        if status == _kernels.ADMM_DUAL_INFEASIBLE:
            return SolveStatus(UNBOUNDED, -np.inf, iterations=total, solve_time=time.perf_counter() - t0,
                               info=info)
        if polish:
            pol = self._polish(q, l, u, x, y, tol)
            if pol is not None:
                x, y = pol
                info["polished"] = True
                if status == _kernels.ADMM_MAX_ITER:
                    status = _kernels.ADMM_SOLVED
        st = OPTIMAL if status == _kernels.ADMM_SOLVED else MAX_ITER
        obj = float(0.5 * x @ self.P @ x + q @ x)
        return SolveStatus(st, obj, x, total, time.perf_counter() - t0, dual=y, info=info)

    def _adapt(self, rho_bar, q, x, z, y):
        Ax = self.A @ x
        Px = self.P @ x
        Aty = self.A.T @ y
        rp = np.max(np.abs(Ax - z), initial=0.0) / max(np.max(np.abs(Ax), initial=0.0),
                                                       np.max(np.abs(z), initial=0.0), 1e-12)
        rd = np.max(np.abs(Px + q + Aty), initial=0.0) / max(np.max(np.abs(Px), initial=0.0),
                                                             np.max(np.abs(Aty), initial=0.0),
                                                             np.max(np.abs(q), initial=0.0), 1e-12)
        if rd <= 0 or rp <= 0:
            return None
        new = float(np.clip(rho_bar * np.sqrt(rp / rd), 1e-6, 1e6))
        if new > 5 * rho_bar or new < rho_bar / 5:
            return new
        return None

    def _polish(self, q, l, u, x, y, tol):
        """Solve the KKT system on the active set guessed from the ADMM iterate."""
        Ax = self.A @ x
        scale = 1.0 + np.abs(Ax)
        near_lo = (Ax - l) <= 1e3 * tol * scale
        near_hi = (u - Ax) <= 1e3 * tol * scale
        act_lo = (y < -tol) | (near_lo & (y <= 0))
        act_hi = (y > tol) | (near_hi & (y >= 0))
        act_lo &= l > -_BIG
        act_hi &= u < _BIG
        equal = self.eq_mask | (np.abs(u - l) <= 1e-12 * (1 + np.abs(u)))
        act = act_lo | act_hi | equal
        idx = np.flatnonzero(act)
        target = np.where(act_hi & ~act_lo, u, l)
        target[equal] = u[equal]
        Aa = self.A[idx]
        k = idx.size
        delta = 1e-9
        KKT = np.zeros((self.n + k, self.n + k))
        KKT[: self.n, : self.n] = self.P
        KKT[: self.n, self.n:] = Aa.T
        KKT[self.n:, : self.n] = Aa
        rhs = np.concatenate([-q, target[idx]])
        reg = KKT.copy()
        reg[: self.n, : self.n] += delta * np.eye(self.n)
        reg[self.n:, self.n:] -= delta * np.eye(k)
        try:
            sol = np.linalg.solve(reg, rhs)
            for _ in range(5):
                sol += np.linalg.solve(reg, rhs - KKT @ sol)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(sol)):
            return None
        xp = sol[: self.n]
        yp = np.zeros(self.m)
        yp[idx] = sol[self.n:]
        Axp = self.A @ xp
        viol = np.maximum(Axp - u, 0) + np.maximum(l - Axp, 0)
        if np.max(viol, initial=0.0) > tol * (1 + np.max(np.abs(Axp), initial=0.0)):
            return None
        # lower-active rows need y <= 0, upper-active rows y >= 0
        ineq = ~equal
        wrong = (ineq & act_lo & ~act_hi & (yp > tol)) | (ineq & act_hi & ~act_lo & (yp < -tol))
        if np.any(wrong):
            return None
        return xp, yp


def solve_qp(qp, tol=1e-6, warm_start=None, max_iter=QP_MAX_ITER, polish=True):
    """One-off solve of a :class:`QuadraticProgram`."""
    A, lo, hi = qp.stacked()
    eq = np.zeros(A.shape[0], dtype=bool)
    eq[qp.b_ineq.size:] = True
    ws = QpWorkspace(qp.P, A, eq_mask=eq, max_iter=max_iter)
    x0 = None if warm_start is None else np.asarray(warm_start, dtype=float)
    return ws.solve(qp.q, lo, hi, tol=tol, x0=x0, polish=polish)


def projected_gradient_norm(qp, x, tol=1e-9):
    """Norm of the gradient projected onto the cone of feasible directions' polar.

    Computed as min over nonnegative multipliers of active rows of
    ||Px + q + A_act' y||, a small NNLS problem.
    """
    from scipy.optimize import nnls

    g = qp.P @ x + qp.q
    A, lo, hi = qp.stacked()
    Ax = A @ x
    scale = 1 + np.abs(Ax)
    rows = []
    for j in range(A.shape[0]):
        if np.isfinite(hi[j]) and hi[j] - Ax[j] <= tol * scale[j]:
            rows.append(A[j])
        if np.isfinite(lo[j]) and Ax[j] - lo[j] <= tol * scale[j]:
            rows.append(-A[j])
    if not rows:
        return float(np.linalg.norm(g))
    M = np.array(rows).T
    _, res = nnls(M, -g)
    return float(res)
