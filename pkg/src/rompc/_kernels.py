"""Hot inner loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``ROMPC_DISABLE_JIT`` is unset (or ``0``). Both paths share one
signature per kernel and are tested against each other.
"""
import os

import numpy as np

_DISABLED = os.environ.get("ROMPC_DISABLE_JIT", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError("jit disabled by ROMPC_DISABLE_JIT")
    from numba import njit
    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False

# status codes shared by the ADMM kernels
ADMM_SOLVED = 0
ADMM_PRIMAL_INFEASIBLE = 1
ADMM_DUAL_INFEASIBLE = 2
ADMM_MAX_ITER = 3


# --------------------------------------------------------------------------
# box vertex enumeration: max_v ||M v||_2 over the vertices of [lo, hi]
# --------------------------------------------------------------------------

def box_norm_max_numpy(M, lo, hi, chunk=4096):
    M = np.ascontiguousarray(M, dtype=float)
    lo = np.asarray(lo, dtype=float)
    width = np.asarray(hi, dtype=float) - lo
    d = lo.size
    base = M @ lo
    if d == 0:
        return float(np.linalg.norm(base))
    cols = M * width[None, :]
    best = 0.0
    total = 1 << d
    bits = np.arange(d)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        sel = ((idx[:, None] >> bits[None, :]) & 1).astype(float)
        vals = base[None, :] + sel @ cols.T
        best = max(best, float(np.sqrt(np.max(np.einsum("ij,ij->i", vals, vals)))))
    return best


def _box_norm_max_loop(M, lo, hi):
    rows, d = M.shape
    cur = np.zeros(rows)
    for i in range(rows):
        s = 0.0
        for j in range(d):
            s += M[i, j] * lo[j]
        cur[i] = s
    at_hi = np.zeros(d, dtype=np.bool_)
    best = 0.0
    for i in range(rows):
        best += cur[i] * cur[i]
    total = 1 << d
    for k in range(1, total):
        # Gray code: flip the lowest set bit of k
        j = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            j += 1
        if at_hi[j]:
            step = lo[j] - hi[j]
        else:
            step = hi[j] - lo[j]
        at_hi[j] = not at_hi[j]
        s = 0.0
        for i in range(rows):
            cur[i] += M[i, j] * step
            s += cur[i] * cur[i]
        if s > best:
            best = s
    return np.sqrt(best)


# --------------------------------------------------------------------------
# ADMM iterations for  min 1/2 x'Px + q'x  s.t.  l <= Ax <= u  (dense)
# --------------------------------------------------------------------------

def _inf_norm(v):
    m = 0.0
    for i in range(v.shape[0]):
        a = abs(v[i])
        if a > m:
            m = a
    return m


def _admm_loop(Kinv, P, q, A, l, u, rho, sigma, alpha, x, z, y,
               max_iter, eps_abs, eps_rel, eps_pinf, eps_dinf, check_every):
    n = P.shape[0]
    m = A.shape[0]
    rhs = np.empty(n)
    xt = np.empty(n)
    zt = np.empty(m)
    dx = np.empty(n)
    dy = np.empty(m)
    Ax = np.empty(m)
    Px = np.empty(n)
    Aty = np.empty(n)
    for it in range(1, max_iter + 1):
        for i in range(n):
            rhs[i] = sigma * x[i] - q[i]
        for j in range(m):
            w = rho[j] * z[j] - y[j]
            for i in range(n):
                rhs[i] += A[j, i] * w
        for i in range(n):
            s = 0.0
            for k in range(n):
                s += Kinv[i, k] * rhs[k]
            xt[i] = s
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += A[j, i] * xt[i]
            zt[j] = s
        for i in range(n):
            xn = alpha * xt[i] + (1.0 - alpha) * x[i]
            dx[i] = xn - x[i]
            x[i] = xn
        for j in range(m):
            zr = alpha * zt[j] + (1.0 - alpha) * z[j]
            zn = zr + y[j] / rho[j]
            if zn < l[j]:
                zn = l[j]
            elif zn > u[j]:
                zn = u[j]
            yn = y[j] + rho[j] * (zr - zn)
            dy[j] = yn - y[j]
            y[j] = yn
            z[j] = zn
        if it % check_every != 0 and it != max_iter:
            continue
        # residuals
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += A[j, i] * x[i]
            Ax[j] = s
        for i in range(n):
            s = 0.0
            for k in range(n):
                s += P[i, k] * x[k]
            Px[i] = s
            s = 0.0
            for j in range(m):
                s += A[j, i] * y[j]
            Aty[i] = s
        r_prim = 0.0
        for j in range(m):
            a = abs(Ax[j] - z[j])
            if a > r_prim:
                r_prim = a
        r_dual = 0.0
        for i in range(n):
            a = abs(Px[i] + q[i] + Aty[i])
            if a > r_dual:
                r_dual = a
        e_prim = eps_abs + eps_rel * max(_inf_norm(Ax), _inf_norm(z))
        e_dual = eps_abs + eps_rel * max(_inf_norm(Px), _inf_norm(Aty), _inf_norm(q))
        if r_prim <= e_prim and r_dual <= e_dual:
            return ADMM_SOLVED, it
        # primal infeasibility certificate from the dual increment
        ndy = _inf_norm(dy)
        if ndy > 1e-14:
            s_cert = 0.0
            for i in range(n):
                s = 0.0
                for j in range(m):
                    s += A[j, i] * dy[j]
                if abs(s) > s_cert:
                    s_cert = abs(s)
            if s_cert <= eps_pinf * ndy:
                support = 0.0
                finite = True
                for j in range(m):
                    if dy[j] > 0.0:
                        if u[j] >= 1e20:
                            finite = False
                            break
                        support += u[j] * dy[j]
                    elif dy[j] < 0.0:
                        if l[j] <= -1e20:
                            finite = False
                            break
                        support += l[j] * dy[j]
                if finite and support < -eps_pinf * ndy:
                    return ADMM_PRIMAL_INFEASIBLE, it
        # dual infeasibility certificate from the primal increment
        ndx = _inf_norm(dx)
        if ndx > 1e-14:
            qdx = 0.0
            for i in range(n):
                qdx += q[i] * dx[i]
            if qdx < -eps_dinf * ndx:
                ok = True
                for i in range(n):
                    s = 0.0
                    for k in range(n):
                        s += P[i, k] * dx[k]
                    if abs(s) > eps_dinf * ndx:
                        ok = False
                        break
                if ok:
                    for j in range(m):
                        s = 0.0
                        for i in range(n):
                            s += A[j, i] * dx[i]
                        if u[j] < 1e20 and s > eps_dinf * ndx:
                            ok = False
                            break
                        if l[j] > -1e20 and s < -eps_dinf * ndx:
                            ok = False
                            break
                    if ok:
                        return ADMM_DUAL_INFEASIBLE, it
    return ADMM_MAX_ITER, max_iter


def admm_loop_numpy(Kinv, P, q, A, l, u, rho, sigma, alpha, x, z, y,
                    max_iter, eps_abs, eps_rel, eps_pinf, eps_dinf, check_every):
    """Vectorized twin of the compiled ADMM loop; updates x, z, y in place."""
    big = 1e20
    for it in range(1, max_iter + 1):
        rhs = sigma * x - q + A.T @ (rho * z - y)
        xt = Kinv @ rhs
        zt = A @ xt
        x_new = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zr + y / rho, l, u)
        y_new = y + rho * (zr - z_new)
        dx = x_new - x
        dy = y_new - y
        x[:] = x_new
        z[:] = z_new
        y[:] = y_new
        if it % check_every != 0 and it != max_iter:
            continue
        Ax = A @ x
        Px = P @ x
        Aty = A.T @ y
        r_prim = np.max(np.abs(Ax - z), initial=0.0)
        r_dual = np.max(np.abs(Px + q + Aty), initial=0.0)
        e_prim = eps_abs + eps_rel * max(np.max(np.abs(Ax), initial=0.0), np.max(np.abs(z), initial=0.0))
        e_dual = eps_abs + eps_rel * max(np.max(np.abs(Px), initial=0.0),
                                         np.max(np.abs(Aty), initial=0.0),
                                         np.max(np.abs(q), initial=0.0))
        if r_prim <= e_prim and r_dual <= e_dual:
            return ADMM_SOLVED, it
        ndy = np.max(np.abs(dy), initial=0.0)
        if ndy > 1e-14 and np.max(np.abs(A.T @ dy), initial=0.0) <= eps_pinf * ndy:
            pos, neg = dy > 0, dy < 0
            if not (np.any(u[pos] >= big) or np.any(l[neg] <= -big)):
                support = u[pos] @ dy[pos] + l[neg] @ dy[neg]
                if support < -eps_pinf * ndy:
                    return ADMM_PRIMAL_INFEASIBLE, it
        ndx = np.max(np.abs(dx), initial=0.0)
        if ndx > 1e-14 and q @ dx < -eps_dinf * ndx:
            if np.max(np.abs(P @ dx), initial=0.0) <= eps_dinf * ndx:
                Adx = A @ dx
                if not (np.any((u < big) & (Adx > eps_dinf * ndx))
                        or np.any((l > -big) & (Adx < -eps_dinf * ndx))):
                    return ADMM_DUAL_INFEASIBLE, it
    return ADMM_MAX_ITER, max_iter


if USING_NUMBA:
    _inf_norm = njit(cache=True)(_inf_norm)
    box_norm_max_jit = njit(cache=True)(_box_norm_max_loop)
    admm_loop_jit = njit(cache=True)(_admm_loop)
else:
    box_norm_max_jit = None
    admm_loop_jit = None


def box_norm_max(M, lo, hi):
    """Largest Euclidean norm of ``M v`` over the vertices of the box [lo, hi]."""
    M = np.ascontiguousarray(M, dtype=float)
    lo = np.ascontiguousarray(lo, dtype=float)
    hi = np.ascontiguousarray(hi, dtype=float)
    if USING_NUMBA and lo.size > 0:
        return float(box_norm_max_jit(M, lo, hi))
    return box_norm_max_numpy(M, lo, hi)


def admm_loop(Kinv, P, q, A, l, u, rho, sigma, alpha, x, z, y,
              max_iter, eps_abs, eps_rel, eps_pinf, eps_dinf, check_every):
    if USING_NUMBA:
        status, it = admm_loop_jit(Kinv, P, q, A, l, u, rho, sigma, alpha, x, z, y,
                                   max_iter, eps_abs, eps_rel, eps_pinf, eps_dinf, check_every)
        return int(status), int(it)
    return admm_loop_numpy(Kinv, P, q, A, l, u, rho, sigma, alpha, x, z, y,
                           max_iter, eps_abs, eps_rel, eps_pinf, eps_dinf, check_every)
