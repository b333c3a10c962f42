"""The compiled kernels and their numpy twins agree."""
import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from rompc import _kernels


def test_box_norm_max_matches_enumeration(rng):
    for d in (1, 3, 7):
        M = rng.normal(size=(4, d))
        lo, hi = -rng.uniform(0.1, 1, d), rng.uniform(0.1, 1, d)
        brute = max(np.linalg.norm(M @ np.array(v)) for v in itertools.product(*zip(lo, hi)))
        assert _kernels.box_norm_max(M, lo, hi) == pytest.approx(brute, rel=1e-12)
        assert _kernels.box_norm_max_numpy(M, lo, hi) == pytest.approx(brute, rel=1e-12)


def test_admm_twins_agree(rng):
    from rompc.solvers.qp import QpWorkspace

    n = 6
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    A = np.vstack([np.eye(n), -np.eye(n)])
    ws = QpWorkspace(P, A)
    Kinv = ws._kinv(ws.rho_bar)
    q = rng.normal(size=n) * 3
    l, u = np.full(2 * n, -1e20), np.ones(2 * n) * 0.5
    rho = ws._rho_vec(ws.rho_bar)
    outs = []
    for fn in (_kernels.admm_loop, _kernels.admm_loop_numpy):
        x, z, y = np.zeros(n), np.zeros(2 * n), np.zeros(2 * n)
        status, it = fn(Kinv, P, q, A, l, u, rho, 1e-6, 1.6, x, z, y, 500, 1e-8, 1e-8, 1e-5, 1e-5, 25)
        outs.append((status, it, x.copy()))
    assert outs[0][0] == outs[1][0] and outs[0][1] == outs[1][1]
    assert np.allclose(outs[0][2], outs[1][2], atol=1e-10)


def test_env_flag_selects_numpy_path():
    code = "from rompc import _kernels; print(_kernels.USING_NUMBA)"
    env = dict(os.environ, ROMPC_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
