import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rompc.linalg_core import h2_norm, solve_dare
from rompc.models import random_stable_model
from rompc.reduction import ProjectionBasis, petrov_galerkin_project
from rompc.synthesis import SynthesisError, assemble_error_system, closed_loop_h2, riccati_gains
from rompc.system import StateSpaceModel

from conftest import scalar_model


def _exact_setup(seed=0, n=3):
    fom = random_stable_model(n, m=1, p=1, o=2, m_w=1, seed=seed)
    basis = ProjectionBasis.identity(n)
    rom, _ = petrov_galerkin_project(fom, basis)
    return fom, rom, basis


def test_exact_model_has_zero_residual():
    fom, rom, basis = _exact_setup()
    g = riccati_gains(rom, np.eye(2), np.eye(1), fom=fom, basis=basis)
    err = assemble_error_system(fom, rom, basis, g.K, g.L, np.eye(2), np.eye(1))
    assert not np.any(err.B_eps)


def test_zero_gains_give_block_diagonal():
    fom = random_stable_model(3, m=1, p=1, o=1, seed=1)
    V = np.eye(3)[:, :2]
    basis = ProjectionBasis(V, V)
    rom, _ = petrov_galerkin_project(fom, basis)
    err = assemble_error_system(fom, rom, basis, np.zeros((1, 2)), np.zeros((2, 1)), np.eye(1), np.eye(1))
    A = err.dense_A()
    assert np.array_equal(A[:3, :3], fom.A) and np.array_equal(A[3:, 3:], rom.A)
    assert not np.any(A[:3, 3:]) and not np.any(A[3:, :3])


def test_blocks_match_formula_oracle(rng):
    fom = random_stable_model(4, m=2, p=2, o=1, m_w=1, seed=5)
    V, W = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
    basis = ProjectionBasis(V, W)
    rom, _ = petrov_galerkin_project(fom, basis)
    K, L = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    Hz, Hu = np.array([[1.0], [-1.0]]), np.vstack([np.eye(2), -np.eye(2)])
    err = assemble_error_system(fom, rom, basis, K, L, Hz, Hu)
    Af, Bf, Cf, Hf = fom.A, fom.B, fom.C, fom.H
    A, B, C = rom.A, rom.B, rom.C
    assert np.allclose(err.dense_A(), np.block([[Af, Bf @ K], [L @ Cf, A + B @ K - L @ C]]), atol=1e-12)
    ref_B = np.block([[Af @ V - V @ A, Bf - V @ B], [np.zeros((2, 4))]])
    assert np.allclose(err.B_eps, ref_B, atol=1e-12)
    ref_G = np.block([[fom.B_w, np.zeros((4, 2))], [np.zeros((2, 1)), L]])
    assert np.allclose(np.asarray(err.G_eps), ref_G)
    assert np.allclose(np.asarray(err.E_z), np.hstack([Hz @ Hf, np.zeros((2, 2))]))
    assert np.allclose(err.E_u, np.hstack([np.zeros((4, 4)), Hu @ K]))


def test_scalar_gain_oracle():
    rom = scalar_model()
    g = riccati_gains(rom, [[1.0]], [[1.0]], 1e-3)
    x = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])[0, 0]
    assert g.K[0, 0] == pytest.approx(-x * 0.5 / (x + 1))
    assert abs(0.5 + g.K[0, 0]) < 1


def test_uncontrollable_rom_rejected():
    rom = StateSpaceModel(np.diag([0.5, 0.3]), [[1.0], [0.0]], [[1.0, 1.0]], [[1.0, 1.0]])
    with pytest.raises(SynthesisError, match="controllab"):
        riccati_gains(rom, np.eye(1), np.eye(1))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31 - 1))
def test_separation_structure(n, seed):
    fom, rom, basis = _exact_setup(seed, n)
    g = riccati_gains(rom, np.eye(2), np.eye(1), fom=fom, basis=basis)
    err = assemble_error_system(fom, rom, basis, g.K, g.L, np.eye(2), np.eye(1))
    ev = np.sort_complex(np.linalg.eigvals(err.dense_A()))
    ref = np.sort_complex(np.concatenate([np.linalg.eigvals(rom.A + rom.B @ g.K),
                                          np.linalg.eigvals(rom.A - g.L @ rom.C)]))
    assert np.allclose(ev, ref, atol=1e-8)
    assert g.accepted and g.rho_Aeps < 1


def test_closed_loop_h2_zero_inputs():
    fom, rom, basis = _exact_setup()
    g = riccati_gains(rom, np.eye(2), np.eye(1), fom=fom, basis=basis)
    err = assemble_error_system(fom, rom, basis, g.K, g.L, np.eye(2), np.eye(1))
    err.G_eps = np.zeros_like(np.asarray(err.G_eps))
    assert closed_loop_h2(err, np.eye(2), np.eye(1)) == 0.0


def test_closed_loop_h2_matches_lqg_loop():
    fom, rom, basis = _exact_setup(seed=9)
    g = riccati_gains(rom, np.eye(2), np.eye(1), fom=fom, basis=basis)
    err = assemble_error_system(fom, rom, basis, g.K, g.L, np.eye(2), np.eye(1))
    A, B, C, H, Bw = fom.A, fom.B, fom.C, fom.H, fom.B_w
    K, L = g.K, g.L
    n = A.shape[0]
    # state (x, e) with e = x - x_hat
    Acl = np.block([[A + B @ K, -B @ K], [np.zeros((n, n)), A - L @ C]])
    Bcl = np.block([[Bw, np.zeros((n, 1))], [Bw, -L]])
    Ccl = np.block([[H, np.zeros((2, n))], [K, -K]])
    assert closed_loop_h2(err, np.eye(2), np.eye(1)) == pytest.approx(h2_norm(Acl, Bcl, Ccl), rel=1e-9)


def test_continuous_gains_stabilize():
    A = np.array([[-3.0, 1.0], [0.0, -5.0]])
    fom = StateSpaceModel(A, [[0.0], [1.0]], [[1.0, 0.0]], np.eye(2), [[0.1], [0.0]], dt=None)
    basis = ProjectionBasis.identity(2)
    rom, _ = petrov_galerkin_project(fom, basis)
    g = riccati_gains(rom, np.eye(2), np.eye(1), fom=fom, basis=basis)
    assert g.accepted and g.rho_Aeps < 0
