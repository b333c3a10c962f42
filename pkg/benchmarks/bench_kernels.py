"""Compare the numba kernels with their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both variants in one process. The end-to-end section
runs a closed-loop OCP workload twice in subprocesses, once with
``ROMPC_DISABLE_JIT=1``, so dispatch overhead is included.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from rompc import _kernels as kern


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def _qp_instance(n, m_extra, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    P = M.T @ M / n + 0.1 * np.eye(n)
    q = rng.standard_normal(n)
    A = np.vstack([np.eye(n), rng.standard_normal((m_extra, n))])
    l = -np.ones(n + m_extra)
    u = np.ones(n + m_extra)
    rho, sigma = np.full(n + m_extra, 0.1), 1e-6
    Kinv = np.linalg.inv(P + sigma * np.eye(n) + A.T @ (rho[:, None] * A))
    return Kinv, P, q, A, l, u, rho, sigma


def bench_box(repeat):
    rows = []
    rng = np.random.default_rng(0)
    for d in (8, 12, 16, 18):
        M = rng.standard_normal((10, d))
        lo, hi = -rng.uniform(0.5, 1.5, d), rng.uniform(0.5, 1.5, d)
        t_np, v_np = _best(lambda: kern.box_norm_max_numpy(M, lo, hi), repeat)
        row = {"kernel": "box_norm_max", "size": f"d={d}", "numpy_s": t_np}
        if kern.USING_NUMBA:
            kern.box_norm_max_jit(M, lo, hi)
            t_jit, v_jit = _best(lambda: kern.box_norm_max_jit(M, lo, hi), repeat)
            row.update(numba_s=t_jit, speedup=t_np / t_jit, agree=abs(v_np - v_jit) <= 1e-12 * max(1.0, v_np))
        rows.append(row)
    return rows


def bench_admm(repeat):
    rows = []
    for n, extra in ((10, 10), (40, 40), (120, 120)):
        Kinv, P, q, A, l, u, rho, sigma = _qp_instance(n, extra, n)
        args = (1.6, 4000, 1e-9, 1e-9, 1e-7, 1e-7, 10)

        def run(fn):
            x, z, y = np.zeros(n), np.zeros(n + extra), np.zeros(n + extra)
            status, it = fn(Kinv, P, q, A, l, u, rho, sigma, args[0], x, z, y, *args[1:])
            return status, it, x

        t_np, (s_np, it_np, x_np) = _best(lambda: run(kern.admm_loop_numpy), repeat)
        row = {"kernel": "admm_loop", "size": f"n={n}, rows={n + extra}", "numpy_s": t_np, "iters": int(it_np)}
        if kern.USING_NUMBA:
            run(kern.admm_loop_jit)
            t_jit, (s_jit, it_jit, x_jit) = _best(lambda: run(kern.admm_loop_jit), repeat)
            row.update(numba_s=t_jit, speedup=t_np / t_jit,
                       agree=bool(s_np == s_jit and np.allclose(x_np, x_jit, atol=1e-7)))
        rows.append(row)
    return rows


_E2E = """
import json, time
import numpy as np
from rompc import _kernels
from rompc.geometry import Polytope
from rompc.ocp import OcpSpec, solve_ocp, terminal_ingredients
from rompc.system import StateSpaceModel
rng = np.random.default_rng(1)
n = 8
A = rng.standard_normal((n, n)); A *= 0.95 / max(abs(np.linalg.eigvals(A)))
rom = StateSpaceModel(A, rng.standard_normal((n, 2)), np.eye(n)[:2], np.eye(n)[:3], dt=0.1)
Zb, Ub = Polytope.box(-np.ones(3), np.ones(3)), Polytope.box(-np.ones(2), np.ones(2))
P, _, X_f = terminal_ingredients(rom, np.eye(n), np.eye(2), Zb, Ub)
spec = OcpSpec(rom, Zb, Ub, np.eye(n), np.eye(2), P, X_f, N=20)
solve_ocp(spec, np.zeros(n))
t0 = time.perf_counter()
solves = 0
for _ in range(20):
    x = rng.uniform(-0.3, 0.3, n)
    sol = None
    for _ in range(10):
        sol = solve_ocp(spec, x, warm_start=sol)
        solves += 1
        x = rom.A @ x + rom.B @ sol.u0
print(json.dumps({"numba": _kernels.USING_NUMBA, "seconds": time.perf_counter() - t0, "solves": solves}))
"""


def bench_end_to_end():
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, ROMPC_DISABLE_JIT=flag)
        proc = subprocess.run([sys.executable, "-c", _E2E], env=env, capture_output=True, text=True, check=True)
        out[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)
    print(f"numba active: {kern.USING_NUMBA}")
    print(f"{'kernel':<14}{'size':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}  agree")
    for row in bench_box(args.repeat) + bench_admm(args.repeat):
        jit = row.get("numba_s")
        print(f"{row['kernel']:<14}{row['size']:<20}{1e3 * row['numpy_s']:>12.3f}"
              + (f"{1e3 * jit:>12.3f}{row['speedup']:>10.1f}  {row['agree']}" if jit else ""))
    if not args.skip_e2e:
        e2e = bench_end_to_end()
        for label, res in e2e.items():
            print(f"end-to-end OCP ({label}): {res['solves']} solves in {res['seconds']:.2f} s "
                  f"({1e3 * res['seconds'] / res['solves']:.2f} ms/solve)")
        print(f"end-to-end speedup: {e2e['numpy']['seconds'] / e2e['numba']['seconds']:.2f}x")


if __name__ == "__main__":
    main()
