"""Worst-case tracking-error bounds for the tube around the simulated reduced model.

The error is split into a tail part, bounded in a weighted norm through a
decay certificate ||A_eps^i||_G <= M gamma^i, and a recent-window part,
bounded row by row with linear programs over admissible reduced trajectories.
"""
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .geometry import GeometryError, Polytope, support_max, weighted_norm_max
from .linalg_core import LinalgError, matrix_exponential, solve_clyap, solve_dlyap, spectral_radius
from .models import zoh
from .solvers import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp
from .system import StateSpaceModel, dense

DEFAULT_ETA_INIT = 1e10
LYAPUNOV_DIM_LIMIT = 2000
EIGEN_DIM_LIMIT = 5000
ETA_FRACTIONS = (0.05, 0.15, 0.3, 0.5, 0.75)


class BoundsError(LinalgError):
    pass


@dataclass
class DecayParameters:
    """||A^i||_G <= M gamma^i for all i >= 0 (discrete) or ||e^{At}||_G <= M e^{gamma t} (continuous)."""

    M: float
    gamma: float
    G: np.ndarray
    method: str
    eta: float = None

    def __post_init__(self):
        self._chol = None

    @property
    def chol(self):
        """Lower Cholesky factor L of G = L L'."""
        if self._chol is None:
            self._chol = np.linalg.cholesky(0.5 * (self.G + self.G.T))
        return self._chol

    def weighted_norm(self, A):
        """Induced G-norm ||L' A L^-T||_2."""
        L = self.chol
        X = sla.solve_triangular(L, (L.T @ dense(A)).T, lower=True).T
        return float(np.linalg.norm(X, 2))

    def theta_scale(self, theta):
        """||theta' G^-1/2||_2 = sqrt(theta' G^-1 theta), one value per row."""
        Theta = np.atleast_2d(dense(theta))
        Y = sla.solve_triangular(self.chol, Theta.T, lower=True)
        return np.sqrt(np.sum(Y ** 2, axis=0))


@dataclass
class BoundReport:
    delta1: float
    delta2_z: np.ndarray
    delta2_u: np.ndarray
    delta_z: np.ndarray
    delta_u: np.ndarray
    C_r: float = np.nan
    C_w: float = np.nan
    tau: int = 0
    delta1_waived: bool = False
    decay: DecayParameters = None
    decay_profile: np.ndarray = None
    delta1_z: np.ndarray = None
    delta1_u: np.ndarray = None
    percentages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    note: str = ""

    def summary(self):
        """JSON-ready dictionary; non-finite scalars become None."""
        out = {
            "tau": int(self.tau) if float(self.tau).is_integer() else float(self.tau),
            "delta1": _finite_or_none(self.delta1),
            "delta1_waived": bool(self.delta1_waived),
            "C_r": _finite_or_none(self.C_r),
            "C_w": _finite_or_none(self.C_w),
            "delta_z": [float(v) for v in self.delta_z],
            "delta_u": [float(v) for v in self.delta_u],
            "delta2_z": [float(v) for v in self.delta2_z],
            "delta2_u": [float(v) for v in self.delta2_u],
            "percentages": {k: _finite_or_none(v) for k, v in self.percentages.items()},
            "timings": {k: float(v) for k, v in self.timings.items()},
            "note": self.note,
        }
        if self.decay is not None:
            out["decay"] = {"M": _finite_or_none(self.decay.M), "gamma": _finite_or_none(self.decay.gamma),
                            "method": self.decay.method,
                            "eta": None if self.decay.eta is None else float(self.decay.eta)}
        return out


def _finite_or_none(v):
    v = float(v)
    return v if np.isfinite(v) else None


# --------------------------------------------------------------------------
# condensed reduced trajectories
# --------------------------------------------------------------------------

def _state_maps(A, B, n_states):
    """Phi[s] with x_s = Phi[s] @ [x_0; u_0; ...; u_{n_states-2}] under x+ = Ax + Bu."""
    n, m = B.shape
    nz = n + max(n_states - 1, 0) * m
    Phi = np.zeros((n_states, n, nz))
    Phi[0, :, :n] = np.eye(n)
    for s in range(1, n_states):
        Phi[s] = A @ Phi[s - 1]
        Phi[s, :, n + (s - 1) * m: n + s * m] += B
    return Phi


def _control_rows(U, n_controls, offset, nz, m):
    """Either variable bounds (box U) or explicit rows for u_s in U."""
    lb = np.full(nz, -np.inf)
    ub = np.full(nz, np.inf)
    if U.is_box:
        lo, hi = U.bounds
        for s in range(n_controls):
            sl = slice(offset + s * m, offset + (s + 1) * m)
            lb[sl] = lo
            ub[sl] = hi
        return lb, ub, np.zeros((0, nz)), np.zeros(0)
    rows = np.zeros((n_controls * U.n_rows, nz))
    for s in range(n_controls):
        rows[s * U.n_rows:(s + 1) * U.n_rows, offset + s * m: offset + (s + 1) * m] = U.H
    return lb, ub, rows, np.tile(U.b, n_controls)


def _check_lp(res, what):
    if res.status == UNBOUNDED:
        raise BoundsError(f"{what} is unbounded: the reduced model is not observable through H "
                          "(or the state box is missing)")
    if res.status == INFEASIBLE:
        raise BoundsError(f"{what} is infeasible; the constraint sets must contain the origin (internal error)")
    if res.status != OPTIMAL:
        raise BoundsError(f"{what} ended with status {res.status}")
    return res.objective


def _solve_scaled(c, A_ub, b_ub, lb, ub, col_scale, lp_method, what):
    """max c'z with z = D y, rows and objective normalized.

    The reduced coordinates can span many orders of magnitude (weakly
    observable balanced states), which makes raw rows unreadable for
    tolerance-based solvers; this solves the equilibrated program instead.
    """
    d = np.asarray(col_scale, dtype=float)
    cs = c * d
    cmax = np.max(np.abs(cs))
    if cmax == 0:
        return 0.0
    As = A_ub * d
    rn = np.max(np.abs(As), axis=1) if As.size else np.zeros(0)
    keep = rn > 0
    if np.any(b_ub[~keep] < 0):
        raise BoundsError(f"{what} is infeasible; the constraint sets must contain the origin (internal error)")
    As = As[keep] / rn[keep, None]
    bs = b_ub[keep] / rn[keep]
    res = solve_lp(LinearProgram(cs / cmax, As, bs, lb=lb / d, ub=ub / d), method=lp_method)
    return _check_lp(res, what) * cmax


XBAR_DIRECT_STEPS = 50


def compute_xbar(rom, Z, U, i_bar, lp_method="auto"):
    """Hyper-rectangle containing every reduced state whose next ``i_bar`` steps can respect Z and U.

    Long horizons are solved after a short pass whose box is a valid outer
    bound: it fixes the column scaling and enters as redundant bounds.
    """
    n = rom.n
    if i_bar < n - 1:
        raise BoundsError(f"i_bar = {i_bar} must be at least n - 1 = {n - 1}")
    short = max(n - 1, min(i_bar, XBAR_DIRECT_STEPS))
    lo, hi = _xbar_pass(rom, Z, U, short, lp_method, None)
    if i_bar > short:
        lo, hi = _xbar_pass(rom, Z, U, i_bar, lp_method, (lo, hi))
    return Polytope.box(lo, hi, label="Xbar")


def _xbar_pass(rom, Z, U, i_bar, lp_method, outer):
    n, m = rom.n, rom.m
    A, B, H = dense(rom.A), dense(rom.B), dense(rom.H)
    Phi = _state_maps(A, B, i_bar + 1)
    nz = Phi.shape[2]
    rows = np.einsum("qn,snz->sqz", Z.H @ H, Phi).reshape(-1, nz)
    rhs = np.tile(Z.b, i_bar + 1)
    lb, ub, urows, ub_rhs = _control_rows(U, i_bar, n, nz, m)
    A_ub = np.vstack([rows, urows])
    b_ub = np.concatenate([rhs, ub_rhs])
    scale = np.ones(nz)
    if outer is not None:
        lb[:n], ub[:n] = outer
        scale[:n] = np.maximum(np.maximum(np.abs(outer[0]), np.abs(outer[1])), 1e-300)
    lo = np.empty(n)
    hi = np.empty(n)
    for l in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(nz)
            c[l] = sign
            val = _solve_scaled(c, A_ub, b_ub, lb, ub, scale, lp_method, "state-box linear program")
            if sign > 0:
                hi[l] = val
            else:
                lo[l] = -val
    return lo, hi


def compute_cr_cw(err, Xbar, U, W, V, G):
    """Largest G-norms of B_eps r over Xbar x U and of G_eps omega over W x V."""
    G = np.asarray(G, dtype=float)
    C_r = weighted_norm_max(dense(err.B_eps), G, [Xbar, U])
    W, V = _disturbance_sets(W, V)
    Ge = dense(err.G_eps)
    sets, cols = [], []
    if W is not None:
        sets.append(W)
        cols.append(Ge[:, :err.m_w])
    if V is not None:
        sets.append(V)
        cols.append(Ge[:, err.m_w:])
    if not sets:
        return C_r, 0.0
    return C_r, weighted_norm_max(np.hstack(cols), G, sets)


def compute_decay_params(A_eps, method="lyapunov", eta=None, G=None):
    """Decay certificate for a Schur-stable A_eps.

    ``lyapunov``: solve A'GA - eta^2 G + I = 0, then gamma = ||A||_G <= eta
    and M = 1.  ``eigen``: A = T D T^-1, gamma = max |d_j| and
    M = ||G^1/2 T|| ||T^-1 G^-1/2|| (G = I by default).
    """
    A = dense(A_eps)
    n = A.shape[0]
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise BoundsError(f"A_eps is not Schur stable (spectral radius {rho:.6g})")
    if method == "lyapunov":
        if eta is None:
            eta = rho + 0.5 * (1.0 - rho)
        if not rho < eta < 1.0:
            raise BoundsError(f"eta = {eta:.6g} must lie in (spectral radius {rho:.6g}, 1)")
        Gm = solve_dlyap(A / eta, np.eye(n) / eta ** 2)
        params = DecayParameters(1.0, 0.0, Gm, "lyapunov", float(eta))
        params.gamma = params.weighted_norm(A)
        return params
    if method == "eigen":
        vals, T = np.linalg.eig(A)
        cond = np.linalg.cond(T)
        if not np.isfinite(cond) or cond > 1e12:
            raise BoundsError(f"A_eps is not (numerically) diagonalizable: eigenvector condition {cond:.3g}")
        Gm = np.eye(n) if G is None else np.asarray(G, dtype=float)
        params = DecayParameters(1.0, float(np.max(np.abs(vals))), Gm, "eigen")
        Lt = params.chol.T
        Tinv = np.linalg.inv(T)
        left = np.linalg.norm(Lt @ T, 2)
        right = np.linalg.norm(sla.solve_triangular(params.chol, Tinv.T, lower=True).T, 2)
        params.M = max(1.0, float(left * right))
        return params
    raise ValueError(f"unknown decay method {method!r}")


def certificate_violation(params, A_eps, powers=(1, 2, 5, 10, 25, 50)):
    """Largest relative excess of ||A^i||_G over M gamma^i at the given powers."""
    A = dense(A_eps)
    worst = -np.inf
    P = np.eye(A.shape[0])
    last = 0
    for i in sorted(powers):
        P = P @ np.linalg.matrix_power(A, i - last)
        last = i
        bound = params.M * params.gamma ** i
        worst = max(worst, (params.weighted_norm(P) - bound) / max(bound, 1e-300))
    return worst


def delta1(params, eta_init, tau, C_r, C_w):
    """M gamma^(2 tau) eta + M gamma^tau (C_r + C_w) / (1 - gamma)."""
    M, g = params.M, params.gamma
    if min(eta_init, C_r, C_w, tau) < 0:
        raise BoundsError("delta1 inputs must be nonnegative")
    if not 0 <= g < 1:
        raise BoundsError(f"gamma = {g} must lie in [0, 1)")
    with np.errstate(under="ignore"):
        g_tau = g ** tau
        g_2tau = g_tau * g_tau
    val = M * g_2tau * eta_init + M * g_tau * (C_r + C_w) / (1.0 - g)
    if val < 1e-300 and (eta_init > 0 or C_r + C_w > 0):
        warnings.warn("tail bound underflows double precision; clamped to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(val)


# --------------------------------------------------------------------------
# recent-window linear programs
# --------------------------------------------------------------------------

def _row_powers(Theta, A, n_steps):
    """[Theta, Theta A, ..., Theta A^(n_steps-1)] by repeated row-vector products."""
    out = np.empty((n_steps,) + Theta.shape)
    cur = np.array(Theta, dtype=float)
    At = A.T.tocsr() if sp.issparse(A) else np.asarray(A).T
    for t in range(n_steps):
        out[t] = cur
        cur = (At @ cur.T).T
    return out


class WindowLp:
    """Shared constraint data of the recent-window programs.

    Variables are the first window state and all window controls; the
    reduced trajectory over ``n_steps`` states is condensed away.  Every
    state must satisfy Hx in Z and x in Xbar, every control u in U.
    """

    def __init__(self, rom_A, rom_B, rom_H, Xbar, Z, U, n_steps, lp_method="auto", hold=1, anchor=0):
        A, B, H = dense(rom_A), dense(rom_B), dense(rom_H)
        n, m = B.shape
        self.n, self.m, self.S = n, m, n_steps
        # one extra state so that the last control has a slot
        Phi = _state_maps(A, B, n_steps + 1)
        self.Phi = Phi[:n_steps]
        nz = Phi.shape[2]
        self.nz = nz
        lb, ub, urows, ub_rhs = _control_rows(U, n_steps, n, nz, m)
        self.scale = np.ones(nz)
        blocks = [Z.H @ H]
        rhs = [Z.b]
        if Xbar is not None and Xbar.is_box:
            lo, hi = Xbar.bounds
            lb[:n], ub[:n] = lo, hi
            self.scale[:n] = np.maximum(np.maximum(np.abs(lo), np.abs(hi)), 1e-300)
        elif Xbar is not None:
            blocks.append(Xbar.H)
            rhs.append(Xbar.b)
        Hs = np.vstack(blocks)
        b = np.concatenate(rhs)
        rows = np.einsum("qn,snz->sqz", Hs, self.Phi).reshape(-1, nz)
        b = np.tile(b, n_steps)
        if Xbar is not None and Xbar.is_box:
            # box membership of later states as rows
            eye = np.vstack([np.eye(n), -np.eye(n)])
            xr = np.einsum("qn,snz->sqz", eye, self.Phi[1:]).reshape(-1, nz)
            rows = np.vstack([rows, xr])
            b = np.concatenate([b, np.tile(np.concatenate([hi, -lo]), n_steps - 1)])
        self.A_ub = np.vstack([rows, urows])
        self.b_ub = np.concatenate([b, ub_rhs])
        self.lb, self.ub = lb, ub
        self.lp_method = lp_method
        self.T = None
        if hold > 1:
            self._tie_controls(int(hold), int(anchor))

    def _tie_controls(self, hold, anchor):
        """Controls held over blocks of ``hold`` steps; block edges sit at ``anchor`` modulo ``hold``."""
        n, m, S = self.n, self.m, self.S
        block = (np.arange(S) - anchor % hold) // hold
        ids = {b: i for i, b in enumerate(sorted(set(block.tolist())))}
        T = np.zeros((self.nz, n + len(ids) * m))
        T[:n, :n] = np.eye(n)
        first = {}
        for s, b in enumerate(block.tolist()):
            j = ids[b]
            T[n + s * m: n + (s + 1) * m, n + j * m: n + (j + 1) * m] = np.eye(m)
            first.setdefault(j, s)
        pick = np.concatenate([np.arange(n)] + [n + first[j] * m + np.arange(m) for j in range(len(ids))])
        self.A_ub = self.A_ub @ T
        self.lb, self.ub, self.scale = self.lb[pick], self.ub[pick], self.scale[pick]
        self.T = T

    def objective(self, cr, first):
        """Objective vector for sum_j cr[j] . [x_{first+j}; u_{first+j}]."""
        n, m = self.n, self.m
        c = np.einsum("jn,jnz->z", cr[:, :n], self.Phi[first:first + cr.shape[0]])
        for j in range(cr.shape[0]):
            s = first + j
            c[n + s * m: n + (s + 1) * m] += cr[j, n:]
        return c if self.T is None else c @ self.T

    def maximize(self, c):
        if not np.any(c):
            return 0.0
        return _solve_scaled(c, self.A_ub, self.b_ub, self.lb, self.ub, self.scale, self.lp_method,
                             "window linear program")


def _omega_support(g_rows, W, V, m_w):
    """sum_j max over W x V of g_j . omega (the omega terms decouple per step)."""
    total = 0.0
    for g in g_rows:
        if W is not None and np.any(g[:m_w]):
            total += support_max(g[:m_w], W)
        if V is not None and np.any(g[m_w:]):
            total += support_max(g[m_w:], V)
    return total


def _disturbance_sets(W, V):
    W = None if W is None or W.dim == 0 or W.is_zero() else W
    V = None if V is None or V.dim == 0 or V.is_zero() else V
    return W, V


def delta2_many(err, thetas, rom, Xbar, Z, U, W, V, tau, lp_method="auto", jobs=1, window=None):
    """Recent-window bounds for each row of ``thetas``."""
    Theta = np.atleast_2d(dense(thetas)).astype(float)
    if tau < 1:
        raise BoundsError("tau must be at least 1")
    W, V = _disturbance_sets(W, V)
    pows = _row_powers(Theta, err.A_eps, tau)  # pows[t] = Theta A^t
    Be = dense(err.B_eps)
    Ge = dense(err.G_eps)
    if window is None:
        window = WindowLp(rom.A, rom.B, rom.H, Xbar, Z, U, 2 * tau, lp_method)
    # term j uses Theta A^(tau-1-j)
    coef_r = np.einsum("jkq,qr->kjr", pows[::-1], Be)
    coef_w = np.einsum("jkq,qr->kjr", pows[::-1], Ge)

    def one(k):
        if not np.any(Theta[k]):
            return 0.0
        val = window.maximize(window.objective(coef_r[k], tau))
        return val + _omega_support(coef_w[k], W, V, err.m_w)

    # with every set symmetric the bound for -theta equals the bound for theta
    mirror = _mirror_rows(Theta) if all(_symmetric(S) for S in (Xbar, Z, U, W, V)) else {}
    todo = [k for k in range(Theta.shape[0]) if k not in mirror]
    if jobs and jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vals = dict(zip(todo, pool.map(one, todo)))
    else:
        vals = {k: one(k) for k in todo}
    return np.array([vals[mirror.get(k, k)] for k in range(Theta.shape[0])])


def _symmetric(S):
    if S is None:
        return True
    if S.is_box:
        lo, hi = S.bounds
        return bool(np.array_equal(lo, -hi))
    return False


def _mirror_rows(Theta):
    out = {}
    for k in range(Theta.shape[0]):
        for j in range(k):
            if j not in out and np.array_equal(Theta[k], -Theta[j]):
                out[k] = j
                break
    return out


def delta2(err, theta, rom, Xbar, Z, U, W, V, tau, lp_method="auto"):
    return float(delta2_many(err, np.atleast_2d(theta), rom, Xbar, Z, U, W, V, tau, lp_method)[0])


def combine_bounds(delta1_value, params, E_z, E_u, d2_z, d2_u, b_z=None, b_u=None, waived=False):
    """Delta_i = ||theta_i' G^-1/2|| delta1 + delta2_i for the rows of E_z and E_u."""
    E_z = np.atleast_2d(dense(E_z))
    E_u = np.atleast_2d(dense(E_u))
    d2_z = np.asarray(d2_z, dtype=float)
    d2_u = np.asarray(d2_u, dtype=float)
    if d2_z.size != E_z.shape[0] or d2_u.size != E_u.shape[0]:
        raise BoundsError("missing recent-window bounds for some constraint rows")
    if waived or params is None or delta1_value == 0:
        d1_z = np.zeros_like(d2_z)
        d1_u = np.zeros_like(d2_u)
    else:
        d1_z = params.theta_scale(E_z) * delta1_value
        d1_u = params.theta_scale(E_u) * delta1_value
    dz = np.maximum(d1_z + d2_z, 0.0)
    du = np.maximum(d1_u + d2_u, 0.0)
    rep = BoundReport(float(delta1_value), d2_z, d2_u, dz, du, delta1_waived=waived, decay=params,
                      delta1_z=d1_z, delta1_u=d1_u)
    if waived:
        rep.note = "recent-window bounds only; tail term waived under the large-tau argument"
    if b_z is not None and b_u is not None:
        rep.percentages = tightening_percentages(rep, b_z, b_u)
    return rep


def tightening_percentages(rep, b_z, b_u):
    b_z = np.asarray(b_z, dtype=float)
    b_u = np.asarray(b_u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rz = 100 * rep.delta1_z / b_z
        ru = 100 * rep.delta1_u / b_u
        tz = 100 * rep.delta_z / b_z
        tu = 100 * rep.delta_u / b_u
    pct = {"r": float(max(np.max(rz, initial=0.0), np.max(ru, initial=0.0)))}
    if tz.size:
        pct.update(t_z_max=float(np.max(tz)), t_z_min=float(np.min(tz)))
    if tu.size:
        pct.update(t_u_max=float(np.max(tu)), t_u_min=float(np.min(tu)))
    return pct


def norm_decay_profile(err, t_max, threshold=None):
    """||E A_eps^t B_eps||_2 for t = 0..t_max, plus the first t at or below ``threshold``."""
    E = dense(err.E)
    pows = _row_powers(E, err.A_eps, t_max + 1)
    Be = dense(err.B_eps)
    prof = np.array([np.linalg.norm(p @ Be, 2) if p.size else 0.0 for p in pows])
    if threshold is None:
        return prof
    hit = np.flatnonzero(prof <= threshold)
    return prof, (int(hit[0]) if hit.size else None)


# --------------------------------------------------------------------------
# continuous time
# --------------------------------------------------------------------------

def ct_decay_params(A_eps, alpha=None):
    """||e^{At}||_G <= beta e^{alpha t} with beta = 1 from a shifted Lyapunov equation."""
    A = dense(A_eps)
    n = A.shape[0]
    lam = float(np.max(np.linalg.eigvals(A).real))
    if lam >= 0:
        raise BoundsError("continuous A_eps is not Hurwitz")
    a = 0.5 * lam if alpha is None else float(alpha)
    if not lam < a < 0:
        raise BoundsError(f"alpha = {a:.6g} must lie in (max real eigenvalue {lam:.6g}, 0)")
    G = solve_clyap(A - a * np.eye(n), np.eye(n))
    params = DecayParameters(1.0, a, G, "lyapunov-ct", a)
    Lc = params.chol
    # logarithmic G-norm: half the top eigenvalue of L^-1 (A'G + GA) L^-T
    S = A.T @ G + G @ A
    Y = sla.solve_triangular(Lc, sla.solve_triangular(Lc, S, lower=True).T, lower=True)
    mu = 0.5 * float(np.max(np.linalg.eigvalsh(0.5 * (Y + Y.T))))
    params.gamma = min(mu, a)
    return params


def ct_delta1(beta, alpha, eta_init, tau, C_r, C_w):
    """beta e^(2 alpha tau) eta + beta e^(alpha tau) (C_r + C_w) / (-alpha)."""
    if alpha >= 0:
        raise BoundsError("alpha must be negative")
    if beta < 1:
        raise BoundsError("beta must be at least 1")
    return float(beta * np.exp(2 * alpha * tau) * eta_init + beta * np.exp(alpha * tau) * (C_r + C_w) / (-alpha))


def _grid_steps(tau, dt):
    ns = tau / dt
    n_s = int(round(ns))
    if n_s < 1 or abs(ns - n_s) > 1e-9 * max(1.0, ns):
        raise BoundsError(f"dt = {dt} must divide tau = {tau}")
    return n_s


def ct_exponential_rows(Theta, A_eps, dt, n_s, implicit=False):
    """Theta e^{A k dt} for k = 0..n_s, recursively (expm once or implicit Euler)."""
    Theta = np.atleast_2d(Theta)
    if implicit:
        n = A_eps.shape[0]
        Msys = (sp.identity(n, format="csc") - dt * sp.csc_matrix(A_eps)).T
        from scipy.sparse.linalg import splu

        lu = splu(Msys.tocsc())
        out = np.empty((n_s + 1,) + Theta.shape)
        cur = np.array(Theta, dtype=float)
        for k in range(n_s + 1):
            out[k] = cur
            cur = lu.solve(cur.T).T
        return out
    return _row_powers(Theta, matrix_exponential(A_eps, dt), n_s + 1)


def _grid_model(rom, dt):
    """(A, B, H) of ``rom`` on a grid of step ``dt``; continuous models are ZOH-sampled."""
    if rom.discrete:
        if abs(rom.dt - dt) > 1e-12 * max(1.0, dt):
            raise BoundsError(f"discrete reduced model has period {rom.dt}, quadrature step is {dt}")
        return dense(rom.A), dense(rom.B), dense(rom.H)
    Ad, Bd = zoh(rom.A, rom.B, dt)
    return Ad, Bd, dense(rom.H)


def _hold_steps(dt_hold, dt):
    if dt_hold is None:
        return 1
    q = dt_hold / dt
    hold = int(round(q))
    if hold < 1 or abs(q - hold) > 1e-9 * max(1.0, q):
        raise BoundsError(f"quadrature step {dt} must divide the hold period {dt_hold}")
    return hold


def ct_delta2_many(err_ct, thetas, rom, Xbar, Z, U, W, V, tau, dt, lp_method="auto", implicit=False,
                   dt_hold=None):
    """Quadrature version of the recent-window bound for continuous error dynamics.

    ``rom`` is the continuous reduced model (ZOH-sampled at ``dt`` here) or
    its sampled twin at period ``dt``.  With ``dt_hold`` the reduced input is
    piecewise constant over that period, with a switch at the window end.
    State terms use the trapezoid rule; input terms are integrated per
    interval, where the input is constant.
    """
    Theta = np.atleast_2d(dense(thetas)).astype(float)
    n_s = _grid_steps(tau, dt)
    hold = _hold_steps(dt_hold, dt)
    W, V = _disturbance_sets(W, V)
    A_g, B_g, H_g = _grid_model(rom, dt)
    n = A_g.shape[0]
    w = np.full(n_s + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    rows = ct_exponential_rows(Theta, err_ct.A_eps, dt, n_s, implicit)  # rows[k] = Theta e^{A k dt}
    # grid point j sits at s_j = t - tau + j dt and carries e^{A (tau - j dt)}
    Rj = rows[::-1]
    Be, Ge = dense(err_ct.B_eps), dense(err_ct.G_eps)
    coef_x = np.einsum("jkq,qr->kjr", Rj * w[:, None, None], Be[:, :n])
    coef_u = np.zeros(coef_x.shape[:2] + (Be.shape[1] - n,))
    coef_u[:, :-1] = np.einsum("jkq,qr->kjr", 0.5 * dt * (Rj[:-1] + Rj[1:]), Be[:, n:])
    coef_r = np.concatenate([coef_x, coef_u], axis=2)
    coef_w = np.einsum("jkq,qr->kjr", Rj * w[:, None, None], Ge)
    window = WindowLp(A_g, B_g, H_g, Xbar, Z, U, 2 * n_s + 1, lp_method, hold=hold, anchor=2 * n_s)
    out = []
    for k in range(Theta.shape[0]):
        if not np.any(Theta[k]):
            out.append(0.0)
            continue
        val = window.maximize(window.objective(coef_r[k], n_s))
        out.append(val + _omega_support(coef_w[k], W, V, err_ct.m_w))
    return np.array(out)


def ct_delta2(err_ct, theta, rom, Xbar, Z, U, W, V, tau, dt, lp_method="auto", implicit=False, dt_hold=None):
    return float(ct_delta2_many(err_ct, np.atleast_2d(theta), rom, Xbar, Z, U, W, V, tau, dt,
                                lp_method, implicit, dt_hold)[0])


# --------------------------------------------------------------------------
# end to end
# --------------------------------------------------------------------------

def select_decay_params(err, Xbar, U, W, V, eta_init, tau, method="auto", eta=None):
    """Pick a decay certificate; for the Lyapunov route try a few eta values.

    Returns ``(params, C_r, C_w, delta1)`` minimizing the largest per-row
    tail contribution, or ``(None, nan, nan, 0)`` when the tail term must be
    waived because the error system is too large for dense work.
    """
    dim = err.dim
    if method == "auto":
        if dim <= LYAPUNOV_DIM_LIMIT:
            method = "lyapunov"
        elif dim <= EIGEN_DIM_LIMIT:
            method = "eigen"
        else:
            return None, np.nan, np.nan, 0.0
    E = dense(err.E)
    W, V = _disturbance_sets(W, V)
    if method == "eigen":
        params = compute_decay_params(err.A_eps, "eigen")
        C_r, C_w = compute_cr_cw(err, Xbar, U, W, V, params.G)
        return params, C_r, C_w, delta1(params, eta_init, tau, C_r, C_w)
    rho = spectral_radius(err.A_eps)
    etas = [eta] if eta is not None else [rho + f * (1 - rho) for f in ETA_FRACTIONS]
    best = None
    for e in etas:
        try:
            params = compute_decay_params(err.A_eps, "lyapunov", e)
        except (LinalgError, np.linalg.LinAlgError):
            continue
        C_r, C_w = compute_cr_cw(err, Xbar, U, W, V, params.G)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            d1 = delta1(params, eta_init, tau, C_r, C_w)
        score = float(np.max(params.theta_scale(E))) * d1
        if best is None or score < best[0]:
            best = (score, params, C_r, C_w, d1)
    if best is None:
        raise BoundsError("no admissible eta produced a decay certificate")
    return best[1:]


def compute_bounds(err, rom, Z, U, W, V, tau, eta_init=DEFAULT_ETA_INIT, i_bar=None, skip_delta1=False,
                   decay_method="auto", eta=None, lp_method="auto", jobs=1, profile=True, Xbar=None):
    """Full bound computation; returns a :class:`BoundReport` (with ``Xbar`` in ``extra``)."""
    timings = {}
    t0 = time.perf_counter()
    if Xbar is None:
        Xbar = compute_xbar(rom, Z, U, tau if i_bar is None else i_bar, lp_method)
    timings["xbar"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    params, C_r, C_w, d1 = None, np.nan, np.nan, 0.0
    waived = bool(skip_delta1)
    if not waived:
        params, C_r, C_w, d1 = select_decay_params(err, Xbar, U, W, V, eta_init, tau, decay_method, eta)
        if params is None:
            waived = True
            warnings.warn("error system too large for a dense decay certificate; tail bound waived",
                          RuntimeWarning, stacklevel=2)
    timings["delta1"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    E_z, E_u = dense(err.E_z), dense(err.E_u)
    window = WindowLp(rom.A, rom.B, rom.H, Xbar, Z, U, 2 * tau, lp_method)
    d2 = delta2_many(err, np.vstack([E_z, E_u]), rom, Xbar, Z, U, W, V, tau, lp_method, jobs, window)
    timings["delta2"] = time.perf_counter() - t0
    nz = E_z.shape[0]
    rep = combine_bounds(d1, params, E_z, E_u, d2[:nz], d2[nz:], Z.b, U.b, waived)
    rep.C_r, rep.C_w, rep.tau = C_r, C_w, tau
    if profile:
        t0 = time.perf_counter()
        rep.decay_profile = norm_decay_profile(err, tau)
        timings["profile"] = time.perf_counter() - t0
    rep.timings = timings
    rep.Xbar = Xbar
    return rep



def compute_bounds_ct(err_ct, rom, Z, U, W, V, tau, dt, eta_init=DEFAULT_ETA_INIT, i_bar=None,
                      skip_delta1=False, alpha=None, lp_method="auto", implicit=False, Xbar=None, dt_hold=None):
    """Continuous-time bounds: shifted-Lyapunov tail term plus the quadrature window term.

    ``rom`` is the continuous reduced model; ``dt`` is the quadrature step
    and ``dt_hold`` the period over which the reduced input is held (the
    OCP period).  The state box is computed on the ``dt`` grid with free
    inputs, an outer bound of the held-input case; ``i_bar`` counts its
    steps (default tau / dt).
    """
    timings = {}
    n_s = _grid_steps(tau, dt)
    t0 = time.perf_counter()
    if Xbar is None:
        A_g, B_g, H_g = _grid_model(rom, dt)
        grid = StateSpaceModel(A_g, B_g, np.zeros((1, A_g.shape[0])), H_g, dt=dt)
        Xbar = compute_xbar(grid, Z, U, n_s if i_bar is None else i_bar, lp_method)
    timings["xbar"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    params, C_r, C_w, d1 = None, np.nan, np.nan, 0.0
    if not skip_delta1:
        params = ct_decay_params(err_ct.A_eps, alpha)
        C_r, C_w = compute_cr_cw(err_ct, Xbar, U, W, V, params.G)
        d1 = ct_delta1(params.M, params.gamma, eta_init, tau, C_r, C_w)
    timings["delta1"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    E_z, E_u = dense(err_ct.E_z), dense(err_ct.E_u)
    d2 = ct_delta2_many(err_ct, np.vstack([E_z, E_u]), rom, Xbar, Z, U, W, V, tau, dt, lp_method, implicit,
                        dt_hold)
    timings["delta2"] = time.perf_counter() - t0
    nz = E_z.shape[0]
    rep = combine_bounds(d1, params, E_z, E_u, d2[:nz], d2[nz:], Z.b, U.b, bool(skip_delta1))
    rep.C_r, rep.C_w, rep.tau = C_r, C_w, tau
    rep.timings = timings
    rep.Xbar = Xbar
    return rep

__all__ = ["DecayParameters", "BoundReport", "BoundsError", "WindowLp", "compute_xbar", "compute_cr_cw",
           "compute_decay_params", "certificate_violation", "delta1", "delta2", "delta2_many",
           "combine_bounds", "tightening_percentages", "norm_decay_profile", "ct_decay_params", "ct_delta1",
           "ct_delta2", "ct_delta2_many", "compute_bounds_ct", "select_decay_params", "compute_bounds", "GeometryError"]
