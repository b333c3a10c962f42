"""Polytopes in H-representation and the maximizations done over them."""
import itertools
import warnings

import numpy as np

from . import _kernels
from .solvers import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp

VERTEX_CAP = 2 ** 20
GENERAL_VERTEX_DIM_CAP = 8


class GeometryError(ValueError):
    pass


class VertexCapError(GeometryError):
    pass


class EmptySetWarning(UserWarning):
    pass


class Polytope:
    """{x | H x <= b}.

    Parameters
    ----------
    H : (q, d) array
    b : (q,) array
    label : str, optional
    """

    def __init__(self, H, b, label=None):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if H.size == 0:
            H = H.reshape(b.size, -1) if b.size else H.reshape(0, H.shape[-1] if H.ndim == 2 else 0)
        if H.shape[0] != b.size:
            raise GeometryError(f"dimension mismatch: H has {H.shape[0]} rows, b has {b.size}")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
            raise GeometryError("polytope data must be finite")
        self.H = H
        self.b = b
        self.label = label
        self._box = _detect_box(H, b)

    @classmethod
    def box(cls, lo, hi, label=None):
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise GeometryError("box bounds must have equal length")
        d = lo.size
        return cls(np.vstack([np.eye(d), -np.eye(d)]), np.concatenate([hi, -lo]), label)

    @property
    def dim(self):
        return self.H.shape[1]

    @property
    def n_rows(self):
        return self.H.shape[0]

    @property
    def is_box(self):
        return self._box is not None

    @property
    def bounds(self):
        """(lo, hi) for boxes, else None."""
        return self._box

    def is_zero(self, tol=0.0):
        """True for the degenerate set {0}."""
        if self.dim == 0:
            return True
        if self._box is None:
            return False
        lo, hi = self._box
        return bool(np.all(np.abs(lo) <= tol) and np.all(np.abs(hi) <= tol))

    def contains(self, x, tol=1e-9):
        return contains(self, x, tol)

    def tighten(self, delta):
        return tighten(self, delta)

    def support(self, c):
        return support_max(c, self)

    def is_empty(self):
        if self.n_rows == 0:
            return False
        lp = LinearProgram(np.zeros(self.dim), self.H, self.b)
        return solve_lp(lp).status == INFEASIBLE

    def is_compact(self):
        """Every coordinate direction bounded (checked by 2d LPs)."""
        if self._box is not None:
            return True
        eye = np.eye(self.dim)
        for i in range(self.dim):
            for s in (1.0, -1.0):
                if not np.isfinite(support_max(s * eye[i], self)):
                    return False
        return True

    def bounding_box(self):
        if self._box is not None:
            return self._box
        eye = np.eye(self.dim)
        hi = np.array([support_max(eye[i], self) for i in range(self.dim)])
        lo = -np.array([support_max(-eye[i], self) for i in range(self.dim)])
        return lo, hi

    def vertices(self):
        """Vertex list (boxes directly, otherwise by halfspace intersection)."""
        if self.dim == 0:
            return np.zeros((1, 0))
        if self._box is not None:
            lo, hi = self._box
            if self.dim > 20:
                raise VertexCapError(f"box of dimension {self.dim} has too many vertices to list")
            return np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        return _general_vertices(self)

    def __eq__(self, other):
        return (isinstance(other, Polytope) and self.H.shape == other.H.shape
                and np.array_equal(self.H, other.H) and np.array_equal(self.b, other.b))

    def __repr__(self):
        kind = "box" if self.is_box else "polytope"
        tag = f" {self.label!r}" if self.label else ""
        return f"<Polytope{tag} {kind} dim={self.dim} rows={self.n_rows}>"


def _detect_box(H, b):
    q, d = H.shape
    if q == 0 or d == 0:
        return (np.zeros(0), np.zeros(0)) if d == 0 else None
    nz = H != 0
    if not np.all(nz.sum(axis=1) == 1):
        return None
    lo = np.full(d, -np.inf)
    hi = np.full(d, np.inf)
    for r in range(q):
        j = int(np.flatnonzero(nz[r])[0])
        v = b[r] / H[r, j]
        if H[r, j] > 0:
            hi[j] = min(hi[j], v)
        else:
            lo[j] = max(lo[j], v)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return None
    return lo, hi


def contains(S, x, tol=1e-9):
    x = np.asarray(x, dtype=float).ravel()
    if x.size != S.dim:
        raise GeometryError(f"dimension mismatch: point of length {x.size} for a {S.dim}-dim set")
    return bool(np.all(S.H @ x <= S.b + tol * (1.0 + np.abs(S.b))))


def tighten(S, delta):
    """{x | H x <= b - delta}; warns when the result is empty or misses the origin."""
    delta = np.asarray(delta, dtype=float).ravel()
    if delta.size != S.n_rows:
        raise GeometryError(f"tightening vector has length {delta.size}, set has {S.n_rows} rows")
    if np.any(delta < 0):
        raise GeometryError("tightening amounts must be nonnegative")
    out = Polytope(S.H.copy(), S.b - delta, S.label)
    if np.any(out.b < 0):
        if out.is_empty():
            warnings.warn(f"tightened set {S.label or ''} is empty", EmptySetWarning, stacklevel=2)
        else:
            warnings.warn(f"tightened set {S.label or ''} no longer contains the origin",
                          EmptySetWarning, stacklevel=2)
    return out


def support_max(c, S):
    """max c'x over S; ``inf`` if unbounded, GeometryError if S is empty."""
    c = np.asarray(c, dtype=float).ravel()
    if c.size != S.dim:
        raise GeometryError("dimension mismatch in support_max")
    if not np.any(c):
        if S.n_rows and S.is_empty():
            raise GeometryError("support of an empty set")
        return 0.0
    if S.is_box:
        lo, hi = S.bounds
        if np.any(lo > hi):
            raise GeometryError("support of an empty set")
        return float(np.sum(np.where(c > 0, c * hi, c * lo)))
    res = solve_lp(LinearProgram(c, S.H, S.b))
    if res.status == UNBOUNDED:
        return np.inf
    if res.status == INFEASIBLE:
        raise GeometryError("support of an empty set")
    if res.status != OPTIMAL:
        raise GeometryError(f"support LP ended with status {res.status}")
    return res.objective


def chebyshev_center(S):
    """Center and radius of the largest inscribed ball."""
    norms = np.linalg.norm(S.H, axis=1)
    d = S.dim
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A = np.hstack([S.H, norms[:, None]])
    lb = np.concatenate([np.full(d, -np.inf), [0.0]])
    res = solve_lp(LinearProgram(c, A, S.b, lb=lb))
    if res.status == UNBOUNDED:
        raise GeometryError("set is unbounded")
    if res.status != OPTIMAL:
        raise GeometryError("set is empty")
    return res.x[:d], res.x[d]


def _general_vertices(S):
    d = S.dim
    if d > GENERAL_VERTEX_DIM_CAP:
        raise VertexCapError(f"vertex enumeration of a general {d}-dim polytope exceeds the dimension cap "
                             f"{GENERAL_VERTEX_DIM_CAP}; split the set into factors or use a bounding box")
    if d == 1:
        lo, hi = S.bounding_box()
        if not (np.isfinite(lo[0]) and np.isfinite(hi[0])):
            raise GeometryError("set is unbounded")
        return np.array([[lo[0]], [hi[0]]])
    from scipy.spatial import HalfspaceIntersection

    center, radius = chebyshev_center(S)
    if radius <= 1e-12:
        raise GeometryError("polytope has empty interior; vertex enumeration needs a full-dimensional set")
    hs = np.hstack([S.H, -S.b[:, None]])
    verts = HalfspaceIntersection(hs, center).intersections
    return _unique_rows(verts)


def _unique_rows(V, tol=1e-9):
    keep = []
    for v in V:
        if not any(np.max(np.abs(v - k)) <= tol * (1 + np.max(np.abs(v))) for k in keep):
            keep.append(v)
    return np.array(keep)


def _factors(S):
    if isinstance(S, Polytope):
        return [S]
    return list(S)


def weighted_norm_max(M, G, S):
    """max over s in S of ||M s||_G with ||x||_G = sqrt(x'Gx).

    ``S`` is a polytope or a sequence of polytopes (their Cartesian
    product, stacked in order).  The maximum of a convex function over a
    polytope sits at a vertex, so this is an exact vertex search: boxes go
    through the compiled Gray-code kernel, other factors through their
    vertex lists.
    """
    factors = _factors(S)
    M = np.atleast_2d(np.asarray(M, dtype=float))
    d = sum(f.dim for f in factors)
    if M.shape[1] != d:
        raise GeometryError(f"dimension mismatch: M has {M.shape[1]} columns, sets have {d} coordinates")
    if d == 0 or M.shape[0] == 0:
        return 0.0
    G = np.atleast_2d(np.asarray(G, dtype=float))
    Lg = np.linalg.cholesky(0.5 * (G + G.T))
    MG = Lg.T @ M  # ||Ms||_G = ||L' M s||_2
    if all(f.is_box for f in factors):
        lo = np.concatenate([f.bounds[0] for f in factors])
        hi = np.concatenate([f.bounds[1] for f in factors])
        # fixed coordinates contribute a constant; drop them from the search
        free = hi > lo
        shift = MG[:, ~free] @ lo[~free]
        if free.sum() > 20:
            raise VertexCapError(f"product of boxes has 2^{int(free.sum())} vertices, above the cap 2^20; "
                                 "decompose per factor or over-approximate by a box")
        if np.any(shift):
            MG2 = np.hstack([MG[:, free], shift[:, None]])
            return _kernels.box_norm_max(MG2, np.append(lo[free], 1.0), np.append(hi[free], 1.0))
        return _kernels.box_norm_max(MG[:, free], lo[free], hi[free])
    vlists = [f.vertices() for f in factors]
    count = int(np.prod([len(v) for v in vlists], dtype=float))
    if count > VERTEX_CAP:
        raise VertexCapError(f"vertex count {count} exceeds the cap {VERTEX_CAP}; "
                             "decompose per factor or over-approximate by a box")
    sums = np.zeros((1, MG.shape[0]))
    col = 0
    for f, verts in zip(factors, vlists):
        img = verts @ MG[:, col:col + f.dim].T
        col += f.dim
        sums = (sums[:, None, :] + img[None, :, :]).reshape(-1, MG.shape[0])
    return float(np.sqrt(np.max(np.sum(sums ** 2, axis=1))))


def cartesian_product(*sets):
    """Single polytope for the product of the given sets."""
    H = _blkdiag([s.H for s in sets])
    b = np.concatenate([s.b for s in sets]) if sets else np.zeros(0)
    return Polytope(H, b)


def _blkdiag(blocks):
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for blk in blocks:
        out[r:r + blk.shape[0], c:c + blk.shape[1]] = blk
        r += blk.shape[0]
        c += blk.shape[1]
    return out
