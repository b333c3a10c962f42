"""Dense numerical kernels: spectra, Lyapunov/Riccati equations, expm, H2 norms."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RICCATI_MAX_ITER = 200
# a returned Riccati solution satisfies |residual| <= RICCATI_RTOL (1 + |X|)
RICCATI_RTOL = 1e-8
DENSE_EIG_LIMIT = 600


class LinalgError(RuntimeError):
    pass


class UnstableError(LinalgError):
    """Raised when an operation needs a stable matrix and gets one that is not."""


class SpectralRadiusError(LinalgError):
    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class RiccatiError(LinalgError):
    pass


@dataclass
class EigenInfo:
    eigenvalues: np.ndarray
    diagonalizable: bool
    T: np.ndarray = None
    T_inv: np.ndarray = None
    condition: float = np.inf


def symmetrize(X):
    return 0.5 * (X + X.T)


def spectral_radius(A, tol=1e-10, maxiter=None):
    """Largest eigenvalue magnitude of A.

    Dense matrices up to ``DENSE_EIG_LIMIT`` use a full eigen-decomposition;
    larger or sparse inputs use ARPACK's largest-magnitude iteration.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"spectral_radius needs a square matrix, got {A.shape}")
    if n == 0:
        return 0.0
    if n <= DENSE_EIG_LIMIT:
        M = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        if not np.all(np.isfinite(M)):
            raise ValueError("spectral_radius: non-finite entries")
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    op = sp.csr_matrix(A) if sp.issparse(A) else np.asarray(A, dtype=float)
    try:
        vals = spla.eigs(op, k=min(4, n - 2), which="LM", tol=tol, maxiter=maxiter or 50 * n,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        est = float(np.max(np.abs(exc.eigenvalues))) if len(exc.eigenvalues) else np.nan
        raise SpectralRadiusError("largest-magnitude eigenvalue iteration did not converge", est) from exc
    return float(np.max(np.abs(vals)))


def is_schur_stable(A, margin=0.0):
    return spectral_radius(A) < 1.0 - margin


def is_hurwitz(A):
    M = A.toarray() if sp.issparse(A) else np.asarray(A)
    return bool(np.max(np.linalg.eigvals(M).real) < 0.0)


def eigen_info(A, cond_limit=1e12):
    """Eigen-decomposition A = T D T^-1 with a diagonalizability verdict."""
    A = np.asarray(A, dtype=float)
    vals, T = np.linalg.eig(A)
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > cond_limit:
        return EigenInfo(vals, False, condition=cond)
    return EigenInfo(vals, True, T, np.linalg.inv(T), cond)


def solve_dlyap(A, Q):
    """Solve A' G A - G + Q = 0 for symmetric G (A Schur stable)."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    rho = spectral_radius(A) if A.size else 0.0
    if rho >= 1.0:
        raise UnstableError(f"unstable argument: spectral radius {rho:.6g} >= 1")
    # scipy solves A X A^H - X + Q = 0, so pass A'
    G = sla.solve_discrete_lyapunov(A.T, Q)
    return symmetrize(G)


def solve_clyap(A, Q):
    """Solve A' G + G A + Q = 0 for symmetric G (A Hurwitz)."""
    A = np.asarray(A, dtype=float)
    if A.size and not is_hurwitz(A):
        raise UnstableError("unstable argument: eigenvalue with nonnegative real part")
    G = sla.solve_continuous_lyapunov(A.T, -np.asarray(Q, dtype=float))
    return symmetrize(G)


def dare_residual(A, B, Q, R, X):
    BtX = B.T @ X
    S = BtX @ B + R
    return A.T @ X @ A - X - A.T @ X @ B @ np.linalg.solve(S, BtX @ A) + Q


def care_residual(A, B, Q, R, X):
    return A.T @ X + X @ A - X @ B @ np.linalg.solve(R, B.T @ X) + Q


def _check_riccati_args(A, B, Q, R):
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (B.shape[1],) * 2:
        raise ValueError("Riccati equation: inconsistent dimensions")
    if np.min(np.linalg.eigvalsh(symmetrize(R))) <= 0:
        raise ValueError("Riccati equation: R must be symmetric positive definite")
    return A, B, symmetrize(Q), symmetrize(R)


def solve_dare(A, B, Q, R):
    """Stabilizing solution of X = A'XA - A'XB(B'XB+R)^-1 B'XA + Q.

    Uses the generalized Schur method and polishes the result with
    Newton-Hewer iterations (each a Stein equation) until the residual
    stalls, with an iteration cap of ``RICCATI_MAX_ITER``.
    """
    A, B, Q, R = _check_riccati_args(A, B, Q, R)
    try:
        X = sla.solve_discrete_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"DARE has no stabilizing solution (pair not stabilizable?): {exc}") from exc
    X = symmetrize(X)
    if not np.all(np.isfinite(X)):
        raise RiccatiError("DARE solution is not finite")

    def closed_loop(X):
        K = -np.linalg.solve(B.T @ X @ B + R, B.T @ X @ A)
        return K, A + B @ K

    K, Acl = closed_loop(X)
    if spectral_radius(Acl) >= 1.0:
        raise RiccatiError("DARE solution is not stabilizing (pair not stabilizable)")
    res = np.linalg.norm(dare_residual(A, B, Q, R, X))
    for _ in range(RICCATI_MAX_ITER):
        if res <= 1e-13 * (1.0 + np.linalg.norm(X)):
            break
        Xn = sla.solve_discrete_lyapunov(Acl.T, Q + K.T @ R @ K)
        Xn = symmetrize(Xn)
        Kn, Acln = closed_loop(Xn)
        res_n = np.linalg.norm(dare_residual(A, B, Q, R, Xn))
        if not res_n < res or spectral_radius(Acln) >= 1.0:
            break
        X, K, Acl, res = Xn, Kn, Acln, res_n
    return _accurate(X, res, "DARE")


def _accurate(X, res, which):
    scale = 1.0 + np.linalg.norm(X)
    if not res <= RICCATI_RTOL * scale:
        raise RiccatiError(f"{which} is numerically ill-posed: relative residual {res / scale:.2e} with "
                           f"|X| = {scale - 1:.2e} (nearly unstabilizable pair)")
    return X


def solve_care(A, B, Q, R):
    """Stabilizing solution of A'X + XA - XBR^-1B'X + Q = 0 (Schur + Newton-Kleinman polish)."""
    A, B, Q, R = _check_riccati_args(A, B, Q, R)
    try:
        X = sla.solve_continuous_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiError(f"CARE has no stabilizing solution (pair not stabilizable?): {exc}") from exc
    X = symmetrize(X)
    if not np.all(np.isfinite(X)):
        raise RiccatiError("CARE solution is not finite")

    def closed_loop(X):
        K = -np.linalg.solve(R, B.T @ X)
        return K, A + B @ K

    K, Acl = closed_loop(X)
    if not is_hurwitz(Acl):
        raise RiccatiError("CARE solution is not stabilizing (pair not stabilizable)")
    res = np.linalg.norm(care_residual(A, B, Q, R, X))
    for _ in range(RICCATI_MAX_ITER):
        if res <= 1e-13 * (1.0 + np.linalg.norm(X)):
            break
        Xn = symmetrize(sla.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K)))
        Kn, Acln = closed_loop(Xn)
        res_n = np.linalg.norm(care_residual(A, B, Q, R, Xn))
        if not res_n < res or not is_hurwitz(Acln):
            break
        X, K, Acl, res = Xn, Kn, Acln, res_n
    return _accurate(X, res, "CARE")


def matrix_exponential(A, t=1.0):
    """e^{A t} by Pade scaling-and-squaring (scipy's expm)."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return sla.expm(A * t)


def gramian(A, B, discrete=True):
    """Controllability Gramian of (A, B)."""
    A = np.asarray(A, dtype=float)
    BB = B @ B.T
    if discrete:
        # A P A' - P + BB' = 0
        return solve_dlyap(A.T, BB)
    return solve_clyap(A.T, BB)


def h2_norm(A, B, C, discrete=True):
    """H2 norm of x+ = Ax + Bw, z = Cx via the controllability Gramian."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    C = C.toarray() if sp.issparse(C) else np.asarray(C, dtype=float)
    if A.size == 0:
        return 0.0
    if discrete:
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise UnstableError(f"h2_norm: system is not Schur stable (rho = {rho:.6g})")
    elif not is_hurwitz(A):
        raise UnstableError("h2_norm: system is not Hurwitz")
    P = gramian(A, B, discrete)
    val = np.trace(C @ P @ C.T)
    return float(np.sqrt(max(val, 0.0)))
