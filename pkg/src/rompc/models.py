"""Self-generated benchmark plants."""
import numpy as np
import scipy.sparse as sp

from .system import StateSpaceModel


def zoh(A, B, dt):
    """Zero-order-hold pair (e^{A dt}, int_0^dt e^{As} ds B) via one augmented exponential."""
    from .linalg_core import matrix_exponential

    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = matrix_exponential(M, dt)
    return E[:n, :n], E[:n, n:]


def _nearest(grid, x):
    return int(np.argmin(np.abs(grid - x)))


def heat_equation(n_full=200, dt=0.01, kappa=1.0, source=(0.4, 0.6), sensors=(0.25, 0.75),
                  outputs=(0.5, 0.25), continuous=False):
    """1-D heat equation on [0, 1] with the left boundary temperature as input.

    Second-order finite differences on ``n_full`` interior nodes with
    Dirichlet ends.  The disturbance is a uniform heat source on ``source``,
    measurements are nodal temperatures at ``sensors`` and the performance
    outputs are nodal temperatures at ``outputs``.  Returns the ZOH model
    with period ``dt`` unless ``continuous`` is set.
    """
    h = 1.0 / (n_full + 1)
    grid = h * np.arange(1, n_full + 1)
    c = kappa / h ** 2
    A = sp.diags([np.full(n_full - 1, c), np.full(n_full, -2 * c), np.full(n_full - 1, c)], [-1, 0, 1])
    B = np.zeros((n_full, 1))
    B[0, 0] = c
    Bw = ((grid >= source[0]) & (grid <= source[1])).astype(float)[:, None]
    C = np.zeros((len(sensors), n_full))
    for i, x in enumerate(sensors):
        C[i, _nearest(grid, x)] = 1.0
    H = np.zeros((len(outputs), n_full))
    for i, x in enumerate(outputs):
        H[i, _nearest(grid, x)] = 1.0
    if continuous:
        return StateSpaceModel(A.tocsr(), B, C, H, Bw, dt=None)
    Ad, BB = zoh(A, np.hstack([B, Bw]), dt)
    return StateSpaceModel(Ad, BB[:, :1], C, H, BB[:, 1:], dt=dt)


def random_stable_model(n, m=1, p=1, o=1, m_w=1, rho=0.9, seed=None, dt=1.0):
    """Random discrete model with spectral radius ``rho``."""
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A *= rho / np.max(np.abs(np.linalg.eigvals(A)))
    return StateSpaceModel(A, rng.normal(size=(n, m)), rng.normal(size=(p, n)), rng.normal(size=(o, n)),
                           rng.normal(size=(n, m_w)) if m_w else None, dt=dt)
