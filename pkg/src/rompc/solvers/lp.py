"""Linear programming: dense bounded-variable revised simplex, with HiGHS for large instances."""
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

# above this many dense matrix entries "auto" hands the problem to HiGHS
AUTO_DENSE_LIMIT = 250_000
# the simplex keeps an explicit basis inverse with one row per constraint
AUTO_ROW_LIMIT = 400
DEGENERATE_PIVOTS_BEFORE_BLAND = 1000
REFACTOR_EVERY = 64


@dataclass
class LinearProgram:
    """maximize c'x  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq,  lb <= x <= ub."""

    c: np.ndarray
    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ineq, self.b_ineq = _rows(self.A_ineq, self.b_ineq, n, "inequality")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "equality")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("LinearProgram: bound vectors must match the number of variables")
        for name, arr in (("c", self.c), ("b_ineq", self.b_ineq), ("b_eq", self.b_eq)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"LinearProgram: non-finite entries in {name}")

    @property
    def n(self):
        return self.c.size

    def dense_size(self):
        return (self.A_ineq.shape[0] + self.A_eq.shape[0] + 1) * (self.n + 1)


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    if sp.issparse(A):
        A = A.toarray()
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] == 0:
        return np.zeros((0, n)), np.zeros(0)
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (b.size, n):
        raise ValueError(f"LinearProgram: {what} matrix {A.shape} does not match ({b.size}, {n})")
    return A, b


@dataclass
class SolveStatus:
    status: str
    objective: float = np.nan
    x: np.ndarray = None
    iterations: int = 0
    solve_time: float = 0.0
    dual: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


def solve_lp(lp, tol=1e-9, method="auto", max_iter=100_000):
    """Solve ``lp`` (a maximization).

    ``method`` is ``"simplex"`` (the built-in revised simplex), ``"highs"``
    (scipy's HiGHS) or ``"auto"``, which uses the simplex for small dense
    problems and HiGHS above ``AUTO_DENSE_LIMIT`` matrix entries or
    ``AUTO_ROW_LIMIT`` constraint rows.
    """
    t0 = time.perf_counter()
    if method == "auto":
        rows = lp.A_ineq.shape[0] + lp.A_eq.shape[0]
        method = "simplex" if lp.dense_size() <= AUTO_DENSE_LIMIT and rows <= AUTO_ROW_LIMIT else "highs"
    if method == "simplex":
        res = _solve_simplex(lp, tol, max_iter)
    elif method == "highs":
        res = _solve_highs(lp, tol, max_iter)
        if res is None:
            res = _solve_simplex(lp, tol, max_iter)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    res.solve_time = time.perf_counter() - t0
    res.info.setdefault("method", method)
    return res


def _solve_highs(lp, tol, max_iter):
    from scipy.optimize import linprog

    bounds = np.column_stack([lp.lb, lp.ub])
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi) for lo, hi in bounds]
    kw = {}
    if lp.A_ineq.shape[0]:
        kw.update(A_ub=lp.A_ineq, b_ub=lp.b_ineq)
    if lp.A_eq.shape[0]:
        kw.update(A_eq=lp.A_eq, b_eq=lp.b_eq)
    out = linprog(-lp.c, bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": max(tol, 1e-10),
                           "dual_feasibility_tolerance": max(tol, 1e-10),
                           "maxiter": max_iter}, **kw)
    it = int(getattr(out, "nit", 0) or 0)
    if out.status == 0:
        return SolveStatus(OPTIMAL, float(lp.c @ out.x), out.x, it)
    if out.status == 2:
        return SolveStatus(INFEASIBLE, iterations=it)
    if out.status == 3:
        return SolveStatus(UNBOUNDED, np.inf, iterations=it)
    if out.status == 1 and out.x is not None:
        return SolveStatus(MAX_ITER, float(lp.c @ out.x), out.x, it)
    return None


class _Simplex:
    """Bounded-variable revised simplex on  min c'x, Ax = b, lo <= x <= hi.

    The basis inverse is kept explicitly and updated by elementary row
    operations, with a fresh inversion every ``REFACTOR_EVERY`` pivots.
    Pricing is Dantzig's rule; after ``DEGENERATE_PIVOTS_BEFORE_BLAND``
    degenerate pivots it switches to Bland's rule for good.
    """

    def __init__(self, A, b, lo, hi, tol, max_iter, dual_tol=None):
        self.A, self.b, self.lo, self.hi = A, b, lo, hi
        self.m, self.N = A.shape
        self.tol = tol
        self.dual_tol = tol if dual_tol is None else dual_tol
        self.max_iter = max_iter
        self.iterations = 0
        self.degenerate = 0
        self.bland = False

    def start(self, basis, x):
        self.basis = np.array(basis, dtype=int)
        self.x = x
        self.refactor()

    def refactor(self):
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs
        self.since_refactor = 0

    def run(self, c):
        """Iterate to optimality for cost ``c``; returns a status string."""
        tol = self.tol
        dtol = self.dual_tol * (1.0 + np.max(np.abs(c), initial=0.0))
        while True:
            if self.iterations >= self.max_iter:
                return MAX_ITER
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            is_basic = np.zeros(self.N, dtype=bool)
            is_basic[self.basis] = True
            free_span = self.hi - self.lo
            can_up = (~is_basic) & (self.x < self.hi - tol) & (d < -dtol)
            can_down = (~is_basic) & (self.x > self.lo + tol) & (d > dtol)
            # fixed variables never enter
            can_up &= free_span > 0
            can_down &= free_span > 0
            eligible = can_up | can_down
            if not eligible.any():
                if self.since_refactor:
                    # confirm with a fresh inverse before declaring optimality
                    self.refactor()
                    continue
                return OPTIMAL
            if self.bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                j = int(np.argmax(score))
            sigma = 1.0 if can_up[j] else -1.0
            alpha = self.Binv @ self.A[:, j]
            step, leave, leave_to = self._ratio_test(alpha, sigma, j)
            if not np.isfinite(step):
                return UNBOUNDED
            self.iterations += 1
            if step <= tol:
                self.degenerate += 1
                if self.degenerate > DEGENERATE_PIVOTS_BEFORE_BLAND:
                    self.bland = True
            self.x[self.basis] -= sigma * step * alpha
            self.x[j] += sigma * step
            if leave < 0:
                continue  # bound flip, basis unchanged
            out_var = self.basis[leave]
            self.x[out_var] = leave_to
            self._pivot(leave, j, alpha)

    def _ratio_test(self, alpha, sigma, j):
        tol = self.tol
        piv_tol = 1e-9
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        move = -sigma * alpha  # rate of change of basic variables
        dec = move < -piv_tol
        inc = move > piv_tol
        ratios = np.full(alpha.size, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_dec = (xb - lob + tol) / (-move)
            r_inc = (hib - xb + tol) / move
        ratios[dec] = r_dec[dec]
        ratios[inc] = r_inc[inc]
        flip = self.hi[j] - self.lo[j]
        t_max = min(np.min(ratios, initial=np.inf), flip + tol)
        if not np.isfinite(t_max):
            return np.inf, -1, 0.0
        if flip <= t_max and flip <= np.min(ratios, initial=np.inf):
            return flip, -1, 0.0
        # Harris pass two: among candidates within t_max pick the largest pivot
        exact = np.full(alpha.size, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            e_dec = (xb - lob) / (-move)
            e_inc = (hib - xb) / move
        exact[dec] = e_dec[dec]
        exact[inc] = e_inc[inc]
        cand = np.flatnonzero(exact <= t_max)
        if cand.size == 0:
            cand = np.array([int(np.argmin(ratios))])
        if self.bland:
            vars_ = self.basis[cand]
            r = int(cand[np.argmin(vars_)])
        else:
            r = int(cand[np.argmax(np.abs(alpha[cand]))])
        step = max(exact[r], 0.0)
        to = lob[r] if dec[r] else hib[r]
        return step, r, to

    def _pivot(self, r, j, alpha):
        self.basis[r] = j
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()
            return
        row = self.Binv[r] / alpha[r]
        self.Binv -= np.outer(alpha, row)
        self.Binv[r] = row


def _solve_simplex(lp, tol, max_iter):
    n = lp.n
    m1 = lp.A_ineq.shape[0]
    m2 = lp.A_eq.shape[0]
    m = m1 + m2
    lo = np.concatenate([lp.lb, np.zeros(m1)])
    hi = np.concatenate([lp.ub, np.full(m1, np.inf)])
    if np.any(lo > hi + tol):
        return SolveStatus(INFEASIBLE)
    A = np.zeros((m, n + m1))
    A[:m1, :n] = lp.A_ineq
    A[:m1, n:] = np.eye(m1)
    A[m1:, :n] = lp.A_eq
    b = np.concatenate([lp.b_ineq, lp.b_eq])
    cost = np.concatenate([-lp.c, np.zeros(m1)])

    if m == 0:
        x = _box_optimum(-lp.c, lp.lb, lp.ub)
        if x is None:
            return SolveStatus(UNBOUNDED, np.inf)
        return SolveStatus(OPTIMAL, float(lp.c @ x), x)

    # nonbasic start: at a finite bound, else 0
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    x[n:] = 0.0
    resid = b - A[:, :n] @ x[:n]
    basis = []
    art_cols = []
    for i in range(m):
        if i < m1 and resid[i] >= 0:
            basis.append(n + i)
            x[n + i] = resid[i]
        else:
            art_cols.append(i)
    n_art = len(art_cols)
    A_full = np.zeros((m, n + m1 + n_art))
    A_full[:, : n + m1] = A
    lo_full = np.concatenate([lo, np.zeros(n_art)])
    hi_full = np.concatenate([hi, np.full(n_art, np.inf)])
    x_full = np.concatenate([x, np.zeros(n_art)])
    for k, i in enumerate(art_cols):
        col = n + m1 + k
        A_full[i, col] = 1.0 if resid[i] >= 0 else -1.0
        x_full[col] = abs(resid[i])
        basis.append(col)
    # basis list must be ordered by row: slack for row i sits at row i
    row_of = {}
    for var in basis:
        row_of[int(np.flatnonzero(A_full[:, var])[0])] = var
    basis = [row_of[i] for i in range(m)]

    scale = 1.0 + max(np.max(np.abs(b), initial=0.0), 1.0)
    solver = _Simplex(A_full, b, lo_full, hi_full, tol * scale, max_iter, dual_tol=tol)
    solver.start(basis, x_full)

    if n_art:
        c1 = np.zeros(A_full.shape[1])
        c1[n + m1:] = 1.0
        st = solver.run(c1)
        if st == MAX_ITER:
            return SolveStatus(MAX_ITER, np.nan, solver.x[:n].copy(), solver.iterations)
        infeas = float(np.sum(solver.x[n + m1:]))
        if infeas > 1e3 * tol * scale:
            return SolveStatus(INFEASIBLE, iterations=solver.iterations)
        # pin artificials at zero; pivot basic ones out where possible
        solver.lo[n + m1:] = 0.0
        solver.hi[n + m1:] = 0.0
        solver.x[n + m1:] = 0.0
        for r in range(m):
            var = solver.basis[r]
            if var < n + m1:
                continue
            row = solver.Binv[r] @ A_full[:, : n + m1]
            nonbasic = np.ones(n + m1, dtype=bool)
            nonbasic[solver.basis[solver.basis < n + m1]] = False
            cand = np.flatnonzero(nonbasic & (np.abs(row) > 1e-7))
            if cand.size:
                j = int(cand[np.argmax(np.abs(row[cand]))])
                alpha = solver.Binv @ A_full[:, j]
                solver._pivot(r, j, alpha)
        solver.refactor()

    c2 = np.concatenate([cost, np.zeros(n_art)])
    st = solver.run(c2)
    xs = solver.x[:n].copy()
    if st == UNBOUNDED:
        return SolveStatus(UNBOUNDED, np.inf, iterations=solver.iterations)
    if st == MAX_ITER:
        return SolveStatus(MAX_ITER, float(lp.c @ xs), xs, solver.iterations)
    y = c2[solver.basis] @ solver.Binv
    return SolveStatus(OPTIMAL, float(lp.c @ xs), xs, solver.iterations, dual=-y,
                       info={"bland": solver.bland})


def _box_optimum(cmin, lb, ub):
    x = np.zeros_like(cmin)
    for i, ci in enumerate(cmin):
        if ci > 0:
            if not np.isfinite(lb[i]):
                return None
            x[i] = lb[i]
        elif ci < 0:
            if not np.isfinite(ub[i]):
                return None
            x[i] = ub[i]
        else:
            x[i] = lb[i] if np.isfinite(lb[i]) else (ub[i] if np.isfinite(ub[i]) else 0.0)
    return x
