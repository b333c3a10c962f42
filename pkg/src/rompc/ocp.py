"""Reduced-order finite-horizon optimal control problem and its terminal ingredients."""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import GeometryError, Polytope
from .linalg_core import LinalgError, solve_dare
from .solvers import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, QpWorkspace, QuadraticProgram, SolveStatus, solve_lp
from .system import dense

MPI_MAX_ITER = 500
DEFAULT_QP_TOL = 1e-7


class OcpError(LinalgError):
    pass


class TerminalSetError(OcpError):
    pass


def regularize_cost(Q, gamma=1e-3, rel_tol=1e-12):
    """Q + gamma I when Q is not numerically positive definite, else Q (symmetrized)."""
    Q = 0.5 * (np.asarray(Q, dtype=float) + np.asarray(Q, dtype=float).T)
    lam = np.linalg.eigvalsh(Q)
    if lam.size and lam[0] > rel_tol * max(lam[-1], 0.0):
        return Q
    return Q + gamma * np.eye(Q.shape[0])


def _target(target, n, m):
    if target is None:
        return np.zeros(n), np.zeros(m)
    x, u = target
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.size != n or u.size != m:
        raise OcpError(f"dimension mismatch: target has sizes ({x.size}, {u.size}), expected ({n}, {m})")
    return x, u


def _lp_max(c, H, b):
    """max c'x over {Hx <= b}, with rows normalized; inf when unbounded."""
    res = solve_lp(LinearProgram(c, H, b))
    if res.status == UNBOUNDED:
        return np.inf
    if res.status == INFEASIBLE:
        raise TerminalSetError("terminal set recursion produced an empty set")
    if res.status != OPTIMAL:
        raise TerminalSetError(f"terminal set LP ended with status {res.status}")
    return res.objective


def _normalize_rows(H, b):
    s = np.max(np.abs(H), axis=1)
    keep = s > 0
    if np.any(b[~keep] < 0):
        raise TerminalSetError("constraint rows with zero normal are violated")
    return H[keep] / s[keep, None], b[keep] / s[keep]


def _remove_redundant(H, b, tol):
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        keep[i] = False
        if not keep.any():
            keep[i] = True
            continue
        val = _lp_max(H[i], H[keep], b[keep])
        if val > b[i] + tol * (1 + abs(b[i])):
            keep[i] = True
    return H[keep], b[keep]


def maximal_invariant_set(A_cl, H, b, max_iter=MPI_MAX_ITER, tol=1e-9, prune=True):
    """Largest set inside {Hx <= b} that is invariant under x+ = A_cl x.

    Standard backward recursion: constraints H A_cl^t x <= b are appended
    until every new row is implied by the current ones.
    """
    A_cl = np.asarray(A_cl, dtype=float)
    H, b = _normalize_rows(np.atleast_2d(np.asarray(H, dtype=float)), np.asarray(b, dtype=float).ravel())
    if np.any(b < 0):
        raise TerminalSetError("the constraint set does not contain the equilibrium")
    Hc, bc = H.copy(), b.copy()
    rows = H
    for _ in range(max_iter):
        rows = rows @ A_cl
        new = []
        for i in range(rows.shape[0]):
            val = _lp_max(rows[i], Hc, bc)
            if val > b[i] + tol * (1 + abs(b[i])):
                new.append(i)
        if not new:
            if prune:
                Hc, bc = _remove_redundant(Hc, bc, tol)
            return Hc, bc
        Hn, bn = _normalize_rows(rows[new], b[new])
        Hc = np.vstack([Hc, Hn])
        bc = np.concatenate([bc, bn])
    raise TerminalSetError(f"invariant-set recursion did not converge within {max_iter} iterations; "
                           "scale the constraint region down or use the terminal-equality fallback")


def terminal_ingredients(rom, Q, R, Zbar, Ubar, target=None, max_iter=MPI_MAX_ITER):
    """Terminal cost P, local gain K_f and terminal set X_f around ``target``.

    P solves the DARE of (A, B, Q, R) and K_f is the matching LQR gain.  X_f
    is the maximal positively invariant set of x+ = (A + B K_f)(x - x_t) + x_t
    inside H x in Zbar, K_f (x - x_t) + u_t in Ubar.
    """
    A, B, H = dense(rom.A), dense(rom.B), dense(rom.H)
    n, m = B.shape
    x_t, u_t = _target(target, n, m)
    if Zbar.is_empty() or Ubar.is_empty():
        raise TerminalSetError("tightened constraint set is empty")
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = solve_dare(A, B, Q, R)
    K_f = -np.linalg.solve(B.T @ P @ B + R, B.T @ P @ A)
    Hx = np.vstack([Zbar.H @ H, Ubar.H @ K_f])
    bx = np.concatenate([Zbar.b - Zbar.H @ (H @ x_t), Ubar.b - Ubar.H @ u_t])
    if np.any(bx < 0):
        margins = ", ".join(f"{v:.3g}" for v in bx[bx < 0])
        raise TerminalSetError(f"target lies outside the tightened sets (margins {margins})")
    Hf, bf = maximal_invariant_set(A + B @ K_f, Hx, bx, max_iter)
    X_f = Polytope(Hf, bf + Hf @ x_t, label="Xf")
    return P, K_f, X_f


@dataclass(frozen=True, eq=False)
class OcpSpec:
    """Data of the reduced-order OCP.

    ``terminal`` is ``"set"`` (x_N in X_f) or ``"equality"`` (x_N = x_t).
    """

    rom: object
    Zbar: Polytope
    Ubar: Polytope
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    X_f: Polytope = None
    N: int = 10
    target: tuple = None
    terminal: str = "set"
    tol: float = DEFAULT_QP_TOL
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise OcpError("horizon N must be at least 1")
        if self.terminal not in ("set", "equality"):
            raise OcpError(f"unknown terminal constraint kind {self.terminal!r}")
        if self.terminal == "set" and self.X_f is None:
            raise OcpError("terminal set missing")
        n, m = self.rom.n, self.rom.m
        for name, M, d in (("Q", self.Q, n), ("R", self.R, m), ("P", self.P, n)):
            M = np.atleast_2d(np.asarray(M, dtype=float))
            if M.shape != (d, d):
                raise OcpError(f"dimension mismatch: {name} is {M.shape}, expected ({d}, {d})")
            if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12 * (1 + np.abs(M).max())):
                raise OcpError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
                raise OcpError(f"{name} must be positive definite")
        if self.Zbar.dim != self.rom.o or self.Ubar.dim != m:
            raise OcpError("dimension mismatch between constraint sets and the reduced model")
        _target(self.target, n, m)

    @property
    def target_pair(self):
        return _target(self.target, self.rom.n, self.rom.m)


class _Condensed:
    """x0-independent part of the condensed QP.

    With U = [u_0; ...; u_{N-1}] the predicted states are
    x_i = A^i x0 + Gam_i U, so cost and constraints are affine in x0.
    """

    def __init__(self, spec):
        A, B, H = dense(spec.rom.A), dense(spec.rom.B), dense(spec.rom.H)
        n, m = B.shape
        N = spec.N
        self.n, self.m, self.N = n, m, N
        x_t, u_t = spec.target_pair
        Apow = np.zeros((N + 1, n, n))
        Gam = np.zeros((N + 1, n, N * m))
        Apow[0] = np.eye(n)
        for i in range(1, N + 1):
            Apow[i] = A @ Apow[i - 1]
            Gam[i] = A @ Gam[i - 1]
            Gam[i][:, (i - 1) * m: i * m] = B
        self.Apow, self.Gam = Apow, Gam
        Q = np.asarray(spec.Q, dtype=float)
        R = np.atleast_2d(np.asarray(spec.R, dtype=float))
        P = np.asarray(spec.P, dtype=float)
        W = [Q] * N + [P]
        Hq = np.kron(np.eye(N), R)
        Fx = np.zeros((N * m, n))  # gradient part linear in x0
        g = -np.kron(np.ones(N), R @ u_t)  # gradient part from the target
        for i in range(1, N + 1):
            Gi, Wi = Gam[i], W[i]
            Hq += Gi.T @ Wi @ Gi
            Fx += Gi.T @ Wi @ Apow[i]
            g -= Gi.T @ Wi @ x_t
        self.Hq = 2.0 * 0.5 * (Hq + Hq.T)
        self.Fx, self.g = 2.0 * Fx, 2.0 * g
        self.W, self.R_, self.x_t, self.u_t = W, R, x_t, u_t
        rows, rhs, xmap = [], [], []
        Zh = spec.Zbar.H @ H
        for i in range(1, N):
            rows.append(Zh @ Gam[i])
            xmap.append(Zh @ Apow[i])
            rhs.append(spec.Zbar.b)
        for i in range(N):
            blk = np.zeros((spec.Ubar.n_rows, N * m))
            blk[:, i * m:(i + 1) * m] = spec.Ubar.H
            rows.append(blk)
            xmap.append(np.zeros((spec.Ubar.n_rows, n)))
            rhs.append(spec.Ubar.b)
        n_eq = 0
        if spec.terminal == "set":
            rows.append(spec.X_f.H @ Gam[N])
            xmap.append(spec.X_f.H @ Apow[N])
            rhs.append(spec.X_f.b)
        self.n_ineq = sum(r.shape[0] for r in rows)
        if spec.terminal == "equality":
            rows.append(Gam[N])
            xmap.append(Apow[N])
            rhs.append(x_t)
            n_eq = n
        self.A_c = np.vstack(rows)
        self.Ex = np.vstack(xmap)
        self.b_c = np.concatenate(rhs)
        self.n_eq = n_eq
        self.Z0 = (spec.Zbar.H @ H, spec.Zbar.b)
        eq = np.zeros(self.A_c.shape[0], dtype=bool)
        eq[self.n_ineq:] = True
        self.eq_mask = eq
        self.workspace = QpWorkspace(self.Hq, self.A_c, eq_mask=eq)

    def data(self, x0):
        q = self.Fx @ x0 + self.g
        b = self.b_c - self.Ex @ x0
        return q, b

    def constant(self, x0):
        """Cost terms that do not depend on the controls."""
        c = 0.0
        for i in range(self.N + 1):
            d = self.Apow[i] @ x0 - self.x_t
            c += d @ self.W[i] @ d
        c += self.N * (self.u_t @ self.R_ @ self.u_t)
        return float(c)

    def trajectory(self, x0, U):
        X = np.einsum("inz,z->in", self.Gam, U) + np.einsum("inm,m->in", self.Apow, x0)
        return X, U.reshape(self.N, self.m)


def _condensed(spec):
    if "condensed" not in spec._cache:
        spec._cache["condensed"] = _Condensed(spec)
    return spec._cache["condensed"]


def build_qp(spec, x0):
    """Condensed QP in the stacked controls for initial state ``x0``.

    The returned program carries ``offset`` so that
    ``qp.objective(U) + qp.offset`` is the OCP cost.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != spec.rom.n:
        raise OcpError(f"dimension mismatch: x0 has length {x0.size}, model has {spec.rom.n} states")
    c = _condensed(spec)
    q, b = c.data(x0)
    qp = QuadraticProgram(c.Hq, q, c.A_c[:c.n_ineq], b[:c.n_ineq], c.A_c[c.n_ineq:], b[c.n_ineq:])
    qp.offset = c.constant(x0)
    return qp


@dataclass
class OcpSolution:
    u0: np.ndarray
    x_pred: np.ndarray
    u_pred: np.ndarray
    status: SolveStatus
    cost: float = np.nan

    @property
    def ok(self):
        return self.status.status == OPTIMAL


def solve_ocp(spec, x0, warm_start=None):
    """Solve the OCP from ``x0``; returns an :class:`OcpSolution`.

    ``warm_start`` may be a previous :class:`OcpSolution` (its control
    sequence is shifted by one step, the last control repeated) or a stacked
    control vector.  Infeasibility is reported through the status.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != spec.rom.n:
        raise OcpError(f"dimension mismatch: x0 has length {x0.size}, model has {spec.rom.n} states")
    c = _condensed(spec)
    n, m, N = c.n, c.m, c.N
    Hz0, bz0 = c.Z0
    if np.any(Hz0 @ x0 > bz0 + spec.tol * (1 + np.abs(bz0))):
        st = SolveStatus(INFEASIBLE, info={"reason": "initial state violates the state constraints"})
        return OcpSolution(np.full(m, np.nan), np.full((N + 1, n), np.nan), np.full((N, m), np.nan), st)
    q, b = c.data(x0)
    lo = np.full(b.size, -np.inf)
    lo[c.eq_mask] = b[c.eq_mask]
    U0 = y0 = None
    if isinstance(warm_start, OcpSolution) and warm_start.ok:
        U0 = np.concatenate([warm_start.u_pred[1:].ravel(), warm_start.u_pred[-1]])
        y0 = warm_start.status.dual
    elif warm_start is not None:
        U0 = np.asarray(warm_start, dtype=float).ravel()
    st = c.workspace.solve(q, lo, b, tol=spec.tol, x0=U0, y0=y0)
    if st.x is None or st.status != OPTIMAL:
        return OcpSolution(np.full(m, np.nan), np.full((N + 1, n), np.nan), np.full((N, m), np.nan), st)
    X, Useq = c.trajectory(x0, st.x)
    cost = 0.5 * st.x @ c.Hq @ st.x + q @ st.x + c.constant(x0)
    return OcpSolution(Useq[0].copy(), X, Useq, st, float(cost))


def ocp_spec_from_design(design, target=None, N=None, terminal=None):
    """OcpSpec for a stored design, optionally re-targeted (terminal set recomputed)."""
    N = design.N if N is None else N
    terminal = design.terminal if terminal is None else terminal
    if target is None:
        return OcpSpec(design.rom, design.Z_bar, design.U_bar, design.Q, design.R, design.P,
                       design.terminal_set, N, None, terminal)
    X_f = None
    P = design.P
    if terminal == "set":
        try:
            P, _, X_f = terminal_ingredients(design.rom, design.Q, design.R, design.Z_bar, design.U_bar, target)
        except TerminalSetError:
            if not design.allow_equality_fallback:
                raise
            warnings.warn("terminal set construction failed; using the terminal equality constraint",
                          RuntimeWarning, stacklevel=2)
            terminal = "equality"
    return OcpSpec(design.rom, design.Z_bar, design.U_bar, design.Q, design.R, P, X_f, N, target, terminal)


__all__ = ["OcpSpec", "OcpSolution", "OcpError", "TerminalSetError", "terminal_ingredients", "build_qp",
           "solve_ocp", "maximal_invariant_set", "regularize_cost", "ocp_spec_from_design", "MPI_MAX_ITER",
           "GeometryError"]
