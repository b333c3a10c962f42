"""Closed-loop error system and reduced-order Riccati gain synthesis."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg_core import LinalgError, h2_norm, is_hurwitz, solve_care, solve_dare, spectral_radius
from .reduction import is_controllable, is_observable
from .system import dense

DEFAULT_GAMMA_REG = 1e-3
_SPARSE_FROM = 600


class SynthesisError(LinalgError):
    pass


@dataclass
class ErrorSystem:
    """Error dynamics eps+ = A_eps eps + B_eps r + G_eps omega.

    ``eps = [x_f - V x_bar; x_hat - x_bar]``, ``r = [x_bar; u_bar]`` and
    ``omega = [w; v]``.  The plant/estimator state ``xi = [x_f; x_hat]``
    obeys ``xi+ = A_eps xi + B_xi r + G_eps omega``.  Performance rows are
    ``E_z eps`` (state constraint rows) and ``E_u eps`` (input rows).
    Full-order blocks are sparse when the plant is large.
    """

    A_eps: object
    B_eps: np.ndarray
    G_eps: object
    B_xi: object
    E_z: object
    E_u: np.ndarray
    n_full: int
    n: int
    discrete: bool = True
    H_full: object = None
    K: np.ndarray = None
    m_w: int = 0

    @property
    def dim(self):
        return self.n_full + self.n

    @property
    def E(self):
        if sp.issparse(self.E_z):
            return sp.vstack([self.E_z, sp.csr_matrix(self.E_u)]).tocsr()
        return np.vstack([self.E_z, self.E_u])

    def dense_A(self):
        return dense(self.A_eps)

    def spectral_radius(self):
        return spectral_radius(self.A_eps)

    def is_stable(self):
        if self.discrete:
            return self.spectral_radius() < 1.0
        return is_hurwitz(dense(self.A_eps))


@dataclass
class GainPair:
    K: np.ndarray
    L: np.ndarray
    X: np.ndarray = None
    Y: np.ndarray = None
    rho_Aeps: float = None
    h2_reduced: float = None
    accepted: bool = False


def _blocks(parts, use_sparse):
    if use_sparse:
        return sp.bmat(parts, format="csr")
    return np.block([[dense(p) for p in row] for row in parts])


def assemble_error_system(fom, rom, basis, K, L, Hz, Hu, sparse=None):
    """Build the error-system matrices from the plant, reduced model and gains."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    L = np.atleast_2d(np.asarray(L, dtype=float))
    Hz = np.atleast_2d(np.asarray(Hz, dtype=float))
    Hu = np.atleast_2d(np.asarray(Hu, dtype=float))
    nf, n = fom.n, rom.n
    m, p = fom.m, fom.p
    if basis.V.shape != (nf, n):
        raise SynthesisError(f"dimension mismatch: basis {basis.V.shape} for plant {nf} / model {n}")
    if K.shape != (m, n) or L.shape != (n, p):
        raise SynthesisError(f"dimension mismatch: K {K.shape} (want {(m, n)}), L {L.shape} (want {(n, p)})")
    if Hz.shape[1] != fom.o or Hu.shape[1] != m:
        raise SynthesisError("dimension mismatch in constraint matrices")
    use_sparse = (fom.is_sparse or nf >= _SPARSE_FROM) if sparse is None else sparse
    Af = fom.A if sp.issparse(fom.A) else np.asarray(fom.A)
    Bf, Cf, Hf, Bwf = (dense(M) for M in (fom.B, fom.C, fom.H, fom.B_w))
    A, B, C = rom.A, rom.B, rom.C
    V = basis.V
    BfK = Bf @ K
    Acl = A + B @ K - L @ C
    A_eps = _blocks([[Af, BfK], [L @ Cf, Acl]], use_sparse)
    # residual of the projection: (I - P) A_f V and (I - P) B_f
    res_A = np.asarray(Af @ V) - V @ A
    res_B = Bf - V @ B
    B_eps = np.zeros((nf + n, n + m))
    B_eps[:nf, :n] = res_A
    B_eps[:nf, n:] = res_B
    G_eps = np.zeros((nf + n, fom.m_w + p))
    G_eps[:nf, : fom.m_w] = Bwf
    G_eps[nf:, fom.m_w:] = L
    B_xi = np.block([[-BfK, Bf], [-B @ K, B]])
    E_z = np.hstack([Hz @ Hf, np.zeros((Hz.shape[0], n))])
    E_u = np.hstack([np.zeros((Hu.shape[0], nf)), Hu @ K])
    if use_sparse:
        G_eps = sp.csr_matrix(G_eps)
        E_z = sp.csr_matrix(E_z)
    return ErrorSystem(A_eps, B_eps, G_eps, B_xi, E_z, E_u, nf, n, fom.discrete, Hf, K, fom.m_w)


def check_standing_assumptions(rom):
    """(A, B) controllable and (A, C), (A, H) observable for the reduced model."""
    A = dense(rom.A)
    if not is_controllable(A, rom.B):
        raise SynthesisError("reduced model violates the standing controllability assumption: (A, B) is not "
                             "controllable")
    if not is_observable(A, rom.C):
        raise SynthesisError("reduced model violates the standing observability assumption: (A, C) is not "
                             "observable")
    if not is_observable(A, rom.H):
        raise SynthesisError("reduced model violates the standing observability assumption: (A, H) is not "
                             "observable")


def riccati_gains(rom, W_z, W_u, gamma_reg=DEFAULT_GAMMA_REG, B_w=None, fom=None, basis=None,
                  Hz=None, Hu=None, check_assumptions=True):
    """Controller and estimator gains from two Riccati equations on the reduced model.

    With ``fom`` and ``basis`` given the full error system is assembled and
    its spectral radius checked; a non-stabilizing result raises
    :class:`SynthesisError`.
    """
    if gamma_reg <= 0:
        raise ValueError("gamma_reg must be positive")
    if check_assumptions:
        check_standing_assumptions(rom)
    A, B, C, H = dense(rom.A), dense(rom.B), dense(rom.C), dense(rom.H)
    n = rom.n
    W_z = np.atleast_2d(np.asarray(W_z, dtype=float))
    W_u = np.atleast_2d(np.asarray(W_u, dtype=float))
    B_w = dense(rom.B_w) if B_w is None else np.atleast_2d(B_w)
    R = W_u.T @ W_u
    if np.linalg.matrix_rank(R) < R.shape[0]:
        raise SynthesisError("W_u'W_u must have full rank")
    Q_z = H.T @ W_z.T @ W_z @ H
    Q_w = B_w @ B_w.T + gamma_reg * np.eye(n)
    I_p = np.eye(rom.p)
    if rom.discrete:
        X = solve_dare(A, B, Q_z, R)
        Y = solve_dare(A.T, C.T, Q_w, I_p)
        K = -np.linalg.solve(B.T @ X @ B + R, B.T @ X @ A)
        L = A @ Y @ C.T @ np.linalg.inv(C @ Y @ C.T + I_p).T
    else:
        X = solve_care(A, B, Q_z, R)
        Y = solve_care(A.T, C.T, Q_w, I_p)
        K = -np.linalg.solve(R, B.T @ X)
        L = Y @ C.T
    gains = GainPair(K, L, X, Y)
    if fom is None or basis is None:
        return gains
    Hz = np.eye(fom.o) if Hz is None else Hz
    Hu = np.eye(fom.m) if Hu is None else Hu
    err = assemble_error_system(fom, rom, basis, K, L, Hz, Hu)
    if err.discrete:
        gains.rho_Aeps = err.spectral_radius()
        ok = gains.rho_Aeps < 1.0
    else:
        ev = np.linalg.eigvals(err.dense_A())
        gains.rho_Aeps = float(np.max(ev.real))
        ok = gains.rho_Aeps < 0.0
    if not ok:
        raise SynthesisError(
            f"reduced-order Riccati method failed to stabilize the closed loop "
            f"({'spectral radius' if err.discrete else 'spectral abscissa'} {gains.rho_Aeps:.6g}). Verify that the reduced model is accurate "
            f"(e.g. increase its dimension) or fall back to an optimization constrained on the "
            f"full-order closed loop.")
    gains.accepted = True
    return gains


def closed_loop_h2(err, W_z, W_u):
    """H2 norm from [r; omega] to [W_z H_f e_x; W_u K e_hat]."""
    W_z = np.atleast_2d(np.asarray(W_z, dtype=float))
    W_u = np.atleast_2d(np.asarray(W_u, dtype=float))
    nf, n = err.n_full, err.n
    Hf = dense(err.H_full)
    top = np.hstack([W_z @ Hf, np.zeros((W_z.shape[0], n))])
    bot = np.hstack([np.zeros((W_u.shape[0], nf)), W_u @ err.K])
    H_eps = np.vstack([top, bot])
    Bin = np.hstack([dense(err.B_eps), dense(err.G_eps)])
    if not np.any(Bin):
        if not err.is_stable():
            raise LinalgError("closed-loop error system is unstable")
        return 0.0
    return h2_norm(err.dense_A(), Bin, H_eps, err.discrete)
