import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from rompc.linalg_core import solve_dlyap
from rompc.models import random_stable_model
from rompc.reduction import (ProjectionBasis, ReductionError, balanced_truncation, frequency_response,
                             petrov_galerkin_project, reduce_model, relative_h2_error, stable_unstable_split)
from rompc.system import StateSpaceModel


def test_identity_projection_is_exact():
    fom = random_stable_model(4, m=2, p=1, o=2, seed=1)
    rom, _ = petrov_galerkin_project(fom, ProjectionBasis.identity(4))
    for name in ("A", "B", "C", "H", "B_w"):
        assert np.array_equal(getattr(rom, name), getattr(fom, name))


def test_invariant_block_projection():
    A1, A2 = np.array([[0.5, 0.1], [0.0, 0.3]]), np.array([[0.2]])
    fom = StateSpaceModel(sla.block_diag(A1, A2), [[1.0], [2.0], [3.0]], [[1.0, 0.0, 1.0]], [[0.0, 1.0, 1.0]])
    sel = np.eye(3)[:, :2]
    rom, _ = petrov_galerkin_project(fom, ProjectionBasis(sel, sel))
    assert np.array_equal(rom.A, A1)
    assert np.array_equal(rom.B, [[1.0], [2.0]])
    assert np.array_equal(rom.C, [[1.0, 0.0]])


def test_projection_formula_oracle(rng):
    fom = random_stable_model(4, m=1, p=2, o=1, seed=2)
    V, W = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    Qf = np.diag([1.0, 2.0, 3.0, 4.0])
    rom, Q = petrov_galerkin_project(fom, ProjectionBasis(V, W), Qf=Qf)
    Wl = np.linalg.inv(W.T @ V) @ W.T
    assert np.allclose(rom.A, Wl @ fom.A @ V, atol=1e-12)
    assert np.allclose(rom.B, Wl @ fom.B, atol=1e-12)
    assert np.allclose(rom.B_w, Wl @ fom.B_w, atol=1e-12)
    assert np.allclose(rom.C, fom.C @ V, atol=1e-12)
    assert np.allclose(rom.H, fom.H @ V, atol=1e-12)
    assert np.allclose(Q, V.T @ Qf @ V, atol=1e-12)


def test_singular_test_basis_rejected():
    V = np.eye(3)[:, :2]
    W = np.eye(3)[:, 1:]
    W[:, 1] = 0
    with pytest.raises(ReductionError):
        ProjectionBasis(V, W)


def test_full_order_bt_reproduces_transfer():
    fom = random_stable_model(5, m=1, p=1, o=1, m_w=0, seed=3)
    basis, _ = balanced_truncation(fom, 5)
    rom, _ = petrov_galerkin_project(fom, basis)
    assert relative_h2_error(fom, rom) <= 1e-8


def _two_mode():
    return StateSpaceModel(np.diag([0.5, 0.1]), [[1.0], [1.0]], [[1.0, 1.0]], [[1.0, 1.0]])


def test_hsv_oracle():
    fom = _two_mode()
    b = np.array([[1.0], [1.0]])
    c = b.T
    A = np.diag([0.5, 0.1])
    Pc = solve_dlyap(A.T, b @ b.T)
    Po = solve_dlyap(A, c.T @ c)
    ref = np.sort(np.sqrt(np.abs(np.linalg.eigvals(Pc @ Po))))[::-1]
    _, hsv = balanced_truncation(fom, 1, inputs=b, outputs=c)
    assert np.allclose(hsv, ref, rtol=1e-10)


def test_bt_error_bound_two_mode():
    fom = _two_mode()
    b, c = np.array([[1.0], [1.0]]), np.array([[1.0, 1.0]])
    basis, hsv = balanced_truncation(fom, 1, inputs=b, outputs=c)
    rom, _ = petrov_galerkin_project(fom, basis)
    w = np.linspace(0, np.pi, 1000)
    err = np.abs(frequency_response(fom, w)[:, 0, 0] - frequency_response(rom, w)[:, 0, 0]).max()
    assert err <= 2 * hsv[1] + 1e-6


def test_relative_h2_matches_impulse_oracle():
    fom = _two_mode()
    rom = StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[1.0]])
    h_f = np.array([0.5 ** k + 0.1 ** k for k in range(10_000)])
    h_r = np.array([0.5 ** k for k in range(10_000)])
    ref = np.sqrt(np.sum((h_f - h_r) ** 2) / np.sum(h_f ** 2))
    assert relative_h2_error(fom, rom) == pytest.approx(ref, abs=1e-6)
    assert relative_h2_error(fom, fom) == pytest.approx(0.0, abs=1e-8)


def test_stable_unstable_split_examples(rng):
    fom = random_stable_model(4, seed=4)
    bs, bu, (es, eu) = stable_unstable_split(fom)
    assert bu is None and bs.n == 4 and eu.size == 0
    diag = StateSpaceModel(np.diag([0.5, 1.2]), [[1.0], [1.0]], [[1.0, 1.0]], [[1.0, 1.0]])
    bs, bu, (es, eu) = stable_unstable_split(diag)
    assert bs.n == 1 and bu.n == 1
    assert np.allclose(es, [0.5]) and np.allclose(eu, [1.2])
    # planted unstable pair
    T = rng.normal(size=(8, 8))
    lam = np.concatenate([rng.uniform(-0.9, 0.9, 6), [1.3, -1.5]])
    A = T @ np.diag(lam) @ np.linalg.inv(T)
    m = StateSpaceModel(A, np.ones((8, 1)), np.ones((1, 8)), np.ones((1, 8)))
    bs, bu, (es, eu) = stable_unstable_split(m)
    assert np.allclose(np.sort(np.concatenate([es, eu]).real), np.sort(lam), atol=1e-8)
    assert np.allclose(np.sort(eu.real), [-1.5, 1.3], atol=1e-8)


def test_marginal_eigenvalue_rejected():
    m = StateSpaceModel(np.diag([0.5, 1.0]), [[1.0], [1.0]], [[1.0, 1.0]], [[1.0, 1.0]])
    with pytest.raises(ReductionError, match="marginal"):
        stable_unstable_split(m)


def test_reduce_model_keeps_unstable_modes():
    A = np.diag([0.9, 0.5, 0.2, 1.1])
    m = StateSpaceModel(A, np.ones((4, 1)), np.ones((1, 4)), np.ones((1, 4)))
    basis, _, nu = reduce_model(m, 2)
    rom, _ = petrov_galerkin_project(m, basis)
    assert nu == 1
    assert np.any(np.isclose(np.linalg.eigvals(rom.A), 1.1))


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2 ** 31 - 1))
def test_bt_bound_property(nf, seed):
    fom = random_stable_model(nf, m=1, p=1, o=1, m_w=0, rho=0.85, seed=seed)
    n = nf // 2
    b, c = fom.B, fom.C
    basis, hsv = balanced_truncation(fom, n, inputs=b, outputs=c)
    rom, _ = petrov_galerkin_project(fom, basis)
    w = np.linspace(0, np.pi, 1000)
    gap = np.abs(frequency_response(fom, w, b, c) - frequency_response(rom, w, rom.B, rom.C)).max()
    assert gap <= 2 * hsv[n:].sum() + 1e-6
