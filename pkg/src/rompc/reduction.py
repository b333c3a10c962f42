"""Projection-based model reduction."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .linalg_core import LinalgError, UnstableError, h2_norm, is_hurwitz, solve_clyap, solve_dlyap, spectral_radius
from .system import StateSpaceModel, dense

BASIS_COND_LIMIT = 1e12
MARGINAL_TOL = 1e-8


class ReductionError(LinalgError):
    pass


@dataclass
class ProjectionBasis:
    """Trial basis V and test basis W, both n_f x n."""

    V: np.ndarray
    W: np.ndarray

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.V.shape != self.W.shape:
            raise ReductionError(f"dimension mismatch: V is {self.V.shape}, W is {self.W.shape}")
        WtV = self.W.T @ self.V
        self.condition = float(np.linalg.cond(WtV)) if WtV.size else 1.0
        if not np.isfinite(self.condition) or self.condition > BASIS_COND_LIMIT:
            raise ReductionError(f"W'V is singular or ill-conditioned (cond = {self.condition:.3g})")
        self._WtV_inv_Wt = np.linalg.solve(WtV, self.W.T) if WtV.size else self.W.T.copy()

    @property
    def n_full(self):
        return self.V.shape[0]

    @property
    def n(self):
        return self.V.shape[1]

    @property
    def left(self):
        """(W'V)^-1 W', the map from full to reduced coordinates."""
        return self._WtV_inv_Wt

    def projector(self):
        return self.V @ self._WtV_inv_Wt

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.eye(n))


def petrov_galerkin_project(fom, basis, Qf=None):
    """Reduced model (and reduced state cost when ``Qf`` is given)."""
    if basis.n_full != fom.n:
        raise ReductionError(f"dimension mismatch: basis has {basis.n_full} rows, model has {fom.n} states")
    V, Lt = basis.V, basis.left
    AV = fom.A @ V
    rom = StateSpaceModel(
        Lt @ AV,
        Lt @ dense(fom.B),
        dense(fom.C @ V),
        dense(fom.H @ V),
        Lt @ dense(fom.B_w),
        fom.dt,
    )
    if Qf is None:
        return rom, None
    Q = V.T @ (Qf @ V)
    return rom, 0.5 * (Q + Q.T)


def _check_stable(model):
    A = model.A
    if model.discrete:
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise UnstableError(f"model is not Schur stable (spectral radius {rho:.6g})")
    elif not is_hurwitz(A):
        raise UnstableError("model is not Hurwitz stable")


def _psd_factor(P):
    lam, U = np.linalg.eigh(0.5 * (P + P.T))
    lam = np.clip(lam, 0.0, None)
    return U * np.sqrt(lam)


def gramians(model, inputs=None, outputs=None):
    """Controllability and observability Gramians for the chosen input/output maps."""
    A = dense(model.A)
    Bin = np.hstack([dense(model.B), dense(model.B_w)]) if inputs is None else inputs
    Cout = np.vstack([dense(model.C), dense(model.H)]) if outputs is None else outputs
    if model.discrete:
        # A P A' - P + B B' = 0  and  A' Q A - Q + C' C = 0
        Pc = solve_dlyap(A.T, Bin @ Bin.T)
        Po = solve_dlyap(A, Cout.T @ Cout)
    else:
        Pc = solve_clyap(A.T, Bin @ Bin.T)
        Po = solve_clyap(A, Cout.T @ Cout)
    return Pc, Po


def balanced_truncation(model, n, inputs=None, outputs=None, rank_tol=1e-12):
    """Square-root balanced truncation.

    Balances the inputs ``[B, B_w]`` against the outputs ``[C; H]`` unless
    other maps are given.  Returns ``(basis, hsv)`` with all Hankel singular
    values sorted in descending order.
    """
    _check_stable(model)
    nf = model.n
    if not 1 <= n <= nf:
        raise ReductionError(f"target dimension {n} outside [1, {nf}]")
    Pc, Po = gramians(model, inputs, outputs)
    Lc = _psd_factor(Pc)
    Lo = _psd_factor(Po)
    U, s, Zt = np.linalg.svd(Lo.T @ Lc)
    rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    if n > rank:
        raise ReductionError(f"target dimension {n} exceeds the numerical rank {rank} of the Gramian product")
    S = 1.0 / np.sqrt(s[:n])
    V = Lc @ Zt[:n].T * S
    W = Lo @ U[:, :n] * S
    return ProjectionBasis(V, W), s


def stable_unstable_split(model, marginal_tol=MARGINAL_TOL):
    """Invariant-subspace bases for the stable and unstable parts.

    Returns ``(basis_s, basis_u, (eig_s, eig_u))``.  The unstable basis may
    have zero columns.  Eigenvalues within ``marginal_tol`` of the stability
    boundary are rejected.
    """
    A = dense(model.A)
    ev = np.linalg.eigvals(A)
    if model.discrete:
        marginal = ev[np.abs(np.abs(ev) - 1.0) <= marginal_tol]
        sort = "iuc"
    else:
        marginal = ev[np.abs(ev.real) <= marginal_tol]
        sort = "lhp"
    if marginal.size:
        raise ReductionError(f"marginally stable eigenvalue {marginal[0]:.12g} cannot be classified")
    S, T, ns = sla.schur(A, output="real", sort=sort)
    nf = A.shape[0]
    S11, S12, S22 = S[:ns, :ns], S[:ns, ns:], S[ns:, ns:]
    T1, T2 = T[:, :ns], T[:, ns:]
    if 0 < ns < nf:
        X = sla.solve_sylvester(S11, -S22, -S12)
    else:
        X = np.zeros((ns, nf - ns))
    Vs, Ws = T1, T1 - T2 @ X.T
    Vu, Wu = T1 @ X + T2, T2
    spectra = (np.linalg.eigvals(S11) if ns else np.zeros(0, complex),
               np.linalg.eigvals(S22) if ns < nf else np.zeros(0, complex))
    bs = ProjectionBasis(Vs, Ws) if ns else None
    bu = ProjectionBasis(Vu, Wu) if ns < nf else None
    return bs, bu, spectra


def reduce_model(model, n, marginal_tol=MARGINAL_TOL, inputs=None, outputs=None):
    """Balanced truncation of the stable part with unstable modes kept whole.

    Unstable modes (if any) are appended after the reduced stable states.
    Returns ``(basis, hsv, n_unstable)``.
    """
    bs, bu, _ = stable_unstable_split(model, marginal_tol)
    nu = 0 if bu is None else bu.n
    if nu == 0:
        basis, hsv = balanced_truncation(model, n, inputs, outputs)
        return basis, hsv, 0
    if n < nu:
        raise ReductionError(f"target dimension {n} is smaller than the {nu} unstable modes that must be kept")
    if bs is None or n == nu:
        return ProjectionBasis(bu.V, bu.W), np.zeros(0), nu
    stable, _ = petrov_galerkin_project(model, bs)
    ins = None if inputs is None else bs.left @ inputs
    outs = None if outputs is None else outputs @ bs.V
    bt, hsv = balanced_truncation(stable, n - nu, ins, outs)
    V = np.hstack([bs.V @ bt.V, bu.V])
    W = np.hstack([bs.W @ bt.W, bu.W])
    return ProjectionBasis(V, W), hsv, nu


def relative_h2_error(fom, rom):
    """||S - S_r||_H2 / ||S||_H2 for the u -> z maps."""
    Af, Bf, Hf = dense(fom.A), dense(fom.B), dense(fom.H)
    A, B, H = dense(rom.A), dense(rom.B), dense(rom.H)
    discrete = fom.discrete
    nrm = h2_norm(Af, Bf, Hf, discrete)
    if nrm == 0:
        raise ReductionError("full-order u -> z map has zero H2 norm")
    Ad = sla.block_diag(Af, A)
    Bd = np.vstack([Bf, B])
    Cd = np.hstack([Hf, -H])
    return h2_norm(Ad, Bd, Cd, discrete) / nrm


def frequency_response(model, omegas, inputs=None, outputs=None):
    """Transfer matrix samples, discrete at z = e^{j w}, continuous at s = j w."""
    A = dense(model.A)
    Bin = dense(model.B) if inputs is None else inputs
    Cout = dense(model.H) if outputs is None else outputs
    I = np.eye(A.shape[0])
    pts = np.exp(1j * np.asarray(omegas)) if model.discrete else 1j * np.asarray(omegas)
    return np.array([Cout @ np.linalg.solve(p * I - A, Bin) for p in pts])


def is_controllable(A, B, tol=1e-9):
    """PBH rank test."""
    A = dense(A)
    B = dense(B)
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A), np.linalg.norm(B))
    for lam in np.linalg.eigvals(A):
        M = np.hstack([lam * np.eye(n) - A, B])
        if np.linalg.svd(M, compute_uv=False)[-1] <= tol * scale:
            return False
    return True


def is_observable(A, C, tol=1e-9):
    return is_controllable(dense(A).T, dense(C).T, tol)


__all__ = ["ProjectionBasis", "ReductionError", "petrov_galerkin_project", "balanced_truncation",
           "stable_unstable_split", "reduce_model", "relative_h2_error", "gramians", "frequency_response",
           "is_controllable", "is_observable"]
