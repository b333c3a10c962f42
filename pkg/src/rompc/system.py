"""Linear time-invariant state-space models."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


class DimensionError(ValueError):
    pass


def as_matrix(M, rows=None, cols=None, sparse_ok=True):
    if M is None:
        return np.zeros((rows or 0, cols or 0))
    if sp.issparse(M):
        return sp.csr_matrix(M, dtype=float) if sparse_ok else M.toarray().astype(float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        # a vector is a column when the row count is pinned, else a row
        M = M.reshape(-1, 1) if rows is not None else M.reshape(1, -1)
    return M


def dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


@dataclass
class StateSpaceModel:
    """x+ = A x + B u + B_w w,  y = C x,  z = H x  (or the continuous analogue).

    ``dt`` is the sampling period for discrete models and ``None`` for
    continuous ones.  ``A`` may be a scipy sparse matrix for large models.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    H: np.ndarray
    B_w: np.ndarray = None
    dt: float = 1.0

    def __post_init__(self):
        self.A = as_matrix(self.A)
        n = self.A.shape[0]
        self.B = as_matrix(self.B, rows=n)
        self.C = as_matrix(self.C, cols=n)
        self.H = as_matrix(self.H, cols=n)
        self.B_w = np.zeros((n, 0)) if self.B_w is None else as_matrix(self.B_w, rows=n)
        if self.A.shape != (n, n):
            raise DimensionError(f"dimension mismatch: A is {self.A.shape}, must be square")
        for name, M, axis in (("B", self.B, 0), ("B_w", self.B_w, 0), ("C", self.C, 1), ("H", self.H, 1)):
            if M.ndim != 2 or M.shape[axis] != n:
                raise DimensionError(f"dimension mismatch: {name} has shape {M.shape} for n = {n}")
        if self.dt is not None:
            self.dt = float(self.dt)
            if not self.dt > 0:
                raise ValueError("sampling period dt must be positive for discrete models")
        for name in ("A", "B", "C", "H", "B_w"):
            M = getattr(self, name)
            data = M.data if sp.issparse(M) else M
            if not np.all(np.isfinite(data)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def discrete(self):
        return self.dt is not None

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def o(self):
        return self.H.shape[0]

    @property
    def m_w(self):
        return self.B_w.shape[1]

    @property
    def dims(self):
        return (self.n, self.m, self.p, self.o, self.m_w)

    @property
    def is_sparse(self):
        return sp.issparse(self.A)

    def densified(self):
        return StateSpaceModel(dense(self.A), dense(self.B), dense(self.C), dense(self.H), dense(self.B_w), self.dt)

    def step(self, x, u, w=None):
        xn = self.A @ x + self.B @ u
        if w is not None and self.m_w:
            xn = xn + self.B_w @ w
        return np.asarray(xn).ravel()
