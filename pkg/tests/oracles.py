"""Independent reference computations used by several test modules."""
import itertools

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from rompc.system import dense


def window_coefficients(err, theta, tau):
    """Rows theta A^(tau-1-j) B_eps and theta A^(tau-1-j) G_eps for j = 0..tau-1."""
    A = dense(err.A_eps)
    Be, Ge = dense(err.B_eps), dense(err.G_eps)
    theta = np.asarray(theta, dtype=float).ravel()
    rows = []
    cur = theta.copy()
    for _ in range(tau):
        rows.append(cur.copy())
        cur = cur @ A
    rows = rows[::-1]  # rows[j] = theta A^(tau-1-j)
    return np.array([r @ Be for r in rows]), np.array([r @ Ge for r in rows])


def explicit_window_lp(err, theta, rom, Xbar, Z, U, tau):
    """Window program with explicit trajectory variables and equality dynamics (HiGHS).

    States are expressed in units of the state-box half widths, x_s = D y_s,
    so that the solver sees a well-scaled program.
    """
    A, B, H = dense(rom.A), dense(rom.B), dense(rom.H)
    n, m = B.shape
    lo, hi = Xbar.bounds
    d = np.maximum(np.abs(lo), np.abs(hi))
    D, Dinv = np.diag(d), np.diag(1 / d)
    S = 2 * tau
    nx = (S + 1) * n
    nv = nx + S * m
    xi = lambda s: slice(s * n, (s + 1) * n)
    ui = lambda s: slice(nx + s * m, nx + (s + 1) * m)
    cr, _ = window_coefficients(err, theta, tau)
    c = np.zeros(nv)
    for j in range(tau):
        c[xi(tau + j)] += cr[j, :n] @ D
        c[ui(tau + j)] += cr[j, n:]
    # y_{s+1} = D^-1 A D y_s + D^-1 B u_s
    As, Bs = Dinv @ A @ D, Dinv @ B
    Aeq = sp.lil_matrix((S * n, nv))
    for s in range(S):
        Aeq[s * n:(s + 1) * n, xi(s + 1)] = -np.eye(n)
        Aeq[s * n:(s + 1) * n, xi(s)] = As
        Aeq[s * n:(s + 1) * n, ui(s)] = Bs
    rows, rhs = [], []
    bounds = [(None, None)] * nv
    for s in range(S):
        blk = np.zeros((Z.n_rows, nv))
        blk[:, xi(s)] = Z.H @ H @ D
        rows.append(blk)
        rhs.append(Z.b)
        for i in range(n):
            bounds[s * n + i] = (lo[i] / d[i], hi[i] / d[i])
    ulo, uhi = U.bounds
    for s in range(S):
        for i in range(m):
            bounds[nx + s * m + i] = (ulo[i], uhi[i])
    cmax = np.max(np.abs(c))
    res = linprog(-c / cmax, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), A_eq=Aeq.tocsr(),
                  b_eq=np.zeros(S * n), bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return -res.fun * cmax


def disturbance_support_brute(err, theta, tau, W, V):
    """max over all vertex disturbance sequences of sum_j theta A^(tau-1-j) G_eps omega_j."""
    _, cw = window_coefficients(err, theta, tau)
    verts = []
    for S in (W, V):
        if S is not None:
            verts.append(S.vertices())
    if not verts:
        return 0.0
    omega = np.array([np.concatenate(v) for v in itertools.product(*verts)])
    best = -np.inf
    for seq in itertools.product(range(len(omega)), repeat=tau):
        best = max(best, sum(cw[j] @ omega[k] for j, k in enumerate(seq)))
    return best


def vertex_sequence_brute(err, theta, rom, Xbar, U, tau):
    """max over x0 in vert(Xbar) and all vertex input sequences of the window objective."""
    A, B = dense(rom.A), dense(rom.B)
    n, m = B.shape
    cr, _ = window_coefficients(err, theta, tau)
    uverts = U.vertices()
    best = -np.inf
    for x0 in Xbar.vertices():
        for seq in itertools.product(range(len(uverts)), repeat=2 * tau):
            x = x0.copy()
            val = 0.0
            for s, k in enumerate(seq):
                u = uverts[k]
                if s >= tau:
                    val += cr[s - tau, :n] @ x + cr[s - tau, n:] @ u
                x = A @ x + B @ u
            best = max(best, val)
    return best


def explicit_xbar(rom, Z, U, i_bar):
    """State box from explicit-variable LPs (no condensing)."""
    A, B, H = dense(rom.A), dense(rom.B), dense(rom.H)
    n, m = B.shape
    nx = (i_bar + 1) * n
    nv = nx + i_bar * m
    Aeq = np.zeros((i_bar * n, nv))
    for s in range(i_bar):
        Aeq[s * n:(s + 1) * n, (s + 1) * n:(s + 2) * n] = -np.eye(n)
        Aeq[s * n:(s + 1) * n, s * n:(s + 1) * n] = A
        Aeq[s * n:(s + 1) * n, nx + s * m:nx + (s + 1) * m] = B
    rows = np.zeros(((i_bar + 1) * Z.n_rows, nv))
    for s in range(i_bar + 1):
        rows[s * Z.n_rows:(s + 1) * Z.n_rows, s * n:(s + 1) * n] = Z.H @ H
    b = np.tile(Z.b, i_bar + 1)
    ulo, uhi = U.bounds
    bounds = [(None, None)] * nx + [(ulo[i % m], uhi[i % m]) for i in range(i_bar * m)]
    lo, hi = np.empty(n), np.empty(n)
    for i in range(n):
        for sign in (1, -1):
            c = np.zeros(nv)
            c[i] = -sign
            res = linprog(c, A_ub=rows, b_ub=b, A_eq=Aeq if i_bar else None, b_eq=np.zeros(i_bar * n) if i_bar else None,
                          bounds=bounds, method="highs")
            assert res.status == 0
            if sign > 0:
                hi[i] = -res.fun
            else:
                lo[i] = res.fun
    return lo, hi


def tiny_instance(seed=0):
    """n_f = 4, n = 2 instance with interval sets whose window polytope is a box.

    The state box is invariant under the reduced dynamics and the output set
    is loose, so every window constraint except the box bounds is implied
    and the LP optimum sits at a vertex input sequence.
    """
    from rompc.geometry import Polytope
    from rompc.reduction import balanced_truncation, petrov_galerkin_project
    from rompc.synthesis import assemble_error_system, riccati_gains
    from rompc.system import StateSpaceModel

    A = np.array([[0.6, 0.1, 0.0, 0.0],
                  [0.0, 0.5, 0.1, 0.0],
                  [0.0, 0.0, 0.3, 0.05],
                  [0.0, 0.0, 0.0, 0.2]])
    fom = StateSpaceModel(A, [[0.0], [0.2], [0.5], [1.0]], [[1.0, 0.5, 0.0, 0.2]], [[1.0, 0.0, 0.3, 0.0]],
                          [[0.1], [0.0], [0.0], [0.1]])
    basis, _ = balanced_truncation(fom, 2)
    rom, _ = petrov_galerkin_project(fom, basis)
    U = Polytope.box([-1.0], [1.0])
    absA = np.abs(rom.A)
    assert np.max(np.abs(np.linalg.eigvals(absA))) < 1
    h = np.linalg.solve(np.eye(2) - absA, np.abs(rom.B)[:, 0])
    Xbar = Polytope.box(-h, h)
    zmax = 10 * np.sum(np.abs(rom.H) * h)
    Z = Polytope.box([-zmax], [zmax])
    g = riccati_gains(rom, np.eye(1), np.eye(1), fom=fom, basis=basis, Hz=Z.H, Hu=U.H)
    err = assemble_error_system(fom, rom, basis, g.K, g.L, Z.H, U.H)
    W = Polytope.box([-0.1], [0.1])
    V = Polytope.box([-0.05], [0.05])
    return dict(fom=fom, rom=rom, basis=basis, err=err, Xbar=Xbar, Z=Z, U=U, W=W, V=V, tau=3)
