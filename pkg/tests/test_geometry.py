import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from rompc.geometry import (EmptySetWarning, GeometryError, Polytope, VertexCapError, cartesian_product,
                            contains, support_max, tighten, weighted_norm_max)


def unit_box(d=2):
    return Polytope.box(-np.ones(d), np.ones(d))


def test_contains_examples():
    S = unit_box()
    assert contains(S, [0, 0])
    assert not contains(S, [1 + 1e-3, 0], tol=0)
    assert contains(S, [1 + 1e-12, 0], tol=1e-9)
    with pytest.raises(GeometryError):
        contains(S, [0, 0, 0])


def test_tighten_examples():
    S = Polytope.box([-1], [1])
    assert tighten(S, [0, 0]) == S
    T = tighten(S, [1, 1])
    assert contains(T, [0], tol=0) and not contains(T, [1e-6], tol=0)
    with pytest.warns(EmptySetWarning):
        tighten(S, [1.5, 1.5])


def test_support_examples():
    S = unit_box()
    assert support_max([1, 0], S) == 1.0
    assert support_max([0, 0], S) == 0.0
    half = Polytope([[1.0, 0.0]], [1.0])
    assert support_max([0, 1], half) == np.inf
    tri = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    assert support_max([1, 2], tri) == pytest.approx(2.0)


def test_weighted_norm_examples():
    S = unit_box()
    assert weighted_norm_max(np.eye(2), np.eye(2), S) == pytest.approx(np.sqrt(2))
    assert weighted_norm_max(np.diag([2.0, 0.0]), np.eye(2), S) == pytest.approx(2.0)


def test_weighted_norm_vertex_oracle(rng):
    M = rng.normal(size=(3, 4))
    lo, hi = -rng.uniform(0.1, 2, 4), rng.uniform(0.1, 2, 4)
    G = np.diag(rng.uniform(0.5, 2, 3))
    brute = max(np.sqrt(v @ M.T @ G @ M @ v) for v in map(np.array, itertools.product(*zip(lo, hi))))
    assert weighted_norm_max(M, G, Polytope.box(lo, hi)) == pytest.approx(brute, rel=1e-12)


def test_weighted_norm_product_and_general_factor(rng):
    M = rng.normal(size=(2, 3))
    tri = Polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    box = Polytope.box([-0.5], [2.0])
    verts = [np.array(v) for v in [(0, 0), (1, 0), (0, 1)]]
    brute = max(np.linalg.norm(M @ np.concatenate([v, [s]])) for v in verts for s in (-0.5, 2.0))
    assert weighted_norm_max(M, np.eye(2), [tri, box]) == pytest.approx(brute, rel=1e-9)


def test_weighted_norm_fixed_coordinates(rng):
    M = rng.normal(size=(2, 3))
    S = Polytope.box([-1, 0.5, -2], [1, 0.5, 2])
    brute = max(np.linalg.norm(M @ np.array([a, 0.5, c])) for a in (-1, 1) for c in (-2, 2))
    assert weighted_norm_max(M, np.eye(2), S) == pytest.approx(brute)


def test_vertex_cap():
    with pytest.raises(VertexCapError):
        weighted_norm_max(np.ones((1, 21)), np.eye(1), unit_box(21))


def test_cartesian_product():
    P = cartesian_product(Polytope.box([-1], [1]), Polytope.box([0], [2]))
    assert P.is_box
    lo, hi = P.bounds
    assert np.allclose(lo, [-1, 0]) and np.allclose(hi, [1, 2])


def test_compactness_checks():
    assert unit_box(3).is_compact()
    assert not Polytope([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]).is_compact()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_support_matches_lp_oracle(d, seed):
    r = np.random.default_rng(seed)
    lo, hi = -r.uniform(0.1, 2, d), r.uniform(0.1, 2, d)
    c = r.normal(size=d)
    box = Polytope.box(lo, hi)
    cut = Polytope(np.vstack([box.H, r.normal(size=(2, d))]), np.append(box.b, r.uniform(0.2, 1, 2)))
    for S in (box, cut):
        ref = linprog(-c, A_ub=S.H, b_ub=S.b, bounds=[(None, None)] * d, method="highs")
        assert support_max(c, S) == pytest.approx(-ref.fun, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
def test_tightening_shrinks(d, seed):
    r = np.random.default_rng(seed)
    S = Polytope.box(-np.ones(d), np.ones(d))
    delta = r.uniform(0, 0.9, 2 * d)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        T = tighten(S, delta)
    for x in r.uniform(-1, 1, (20, d)):
        if contains(T, x, tol=0):
            assert contains(S, x, tol=0)
