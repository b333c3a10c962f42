"""Online controller loop, plant simulator and setpoint targets."""
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Polytope
from .model_io import TrajectoryLog
from .models import zoh
from .ocp import OcpError, ocp_spec_from_design, solve_ocp
from .solvers import OPTIMAL
from .system import StateSpaceModel, dense


class RuntimeFailure(RuntimeError):
    """OCP infeasibility (or another solver failure) during the online phase."""

    def __init__(self, message, state=None, k=None, status=None):
        super().__init__(message)
        self.state = state
        self.k = k
        self.status = status


class SetpointError(ValueError):
    pass


# --------------------------------------------------------------------------
# controller
# --------------------------------------------------------------------------

@dataclass
class StartupPolicy:
    """Control used before the handover time k0.

    ``zero``      u_k = 0.
    ``tracking``  u_k = u_s + K(x_hat_k - x_bar_k), so the simulated model is
                  driven by the constant u_bar = u_s (default u_s = 0).
    ``static``    u_k = u_s + gain @ x_hat_k.
    ``sequence``  u_k = sequence[k] (open loop).
    """

    kind: str = "tracking"
    u_s: np.ndarray = None
    gain: np.ndarray = None
    sequence: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("zero", "tracking", "static", "sequence"):
            raise ValueError(f"unknown startup policy {self.kind!r}")
        if self.kind == "sequence" and self.sequence is None:
            raise ValueError("open-loop startup needs a sequence")
        if self.kind == "static" and self.gain is None:
            raise ValueError("static startup needs a gain")

    def control(self, k, x_hat, x_bar, K, m):
        u_s = np.zeros(m) if self.u_s is None else np.asarray(self.u_s, dtype=float).ravel()
        if self.kind == "zero":
            return np.zeros(m)
        if self.kind == "tracking":
            return u_s + K @ (x_hat - x_bar)
        if self.kind == "static":
            return u_s + np.atleast_2d(self.gain) @ x_hat
        seq = np.atleast_2d(np.asarray(self.sequence, dtype=float))
        if seq.shape[0] == 1 and m != 1:
            seq = seq.T
        if k >= seq.shape[0]:
            raise ValueError(f"open-loop startup sequence has only {seq.shape[0]} steps")
        return seq[k].reshape(m)


@dataclass
class ControllerState:
    x_bar: np.ndarray
    x_hat: np.ndarray
    k: int = 0
    k0: int = 0
    phase: str = "startup"
    warm: object = None
    t: float = 0.0
    u_bar_hold: np.ndarray = None

    @classmethod
    def initial(cls, n, k0):
        return cls(np.zeros(n), np.zeros(n), 0, int(k0), "startup" if k0 > 0 else "rompc")


@dataclass
class StepInfo:
    u_bar: np.ndarray
    status: str
    solve_time: float = 0.0
    cost: float = np.nan


def _solve_cached(spec, x_bar, warm, cache):
    """Exact memo of OCP solves keyed by the bit patterns of the inputs."""
    if cache is None:
        return solve_ocp(spec, x_bar, warm)
    wkey = b"" if warm is None else warm.u_pred.tobytes()
    key = (x_bar.tobytes(), wkey)
    sol = cache.get(key)
    if sol is None:
        sol = solve_ocp(spec, x_bar, warm)
        cache[key] = sol
    return sol


def rompc_step(state, y, design, ocp_spec, startup=None, cache=None):
    """One measure-then-act step; returns ``(u_k, new_state, StepInfo)``.

    In the online phase u_bar_k comes from the OCP at x_bar_k; before the
    handover the startup control is applied and u_bar_k reconstructed from
    u_k = u_bar_k + K(x_hat_k - x_bar_k).  Then the simulated model and the
    estimator advance with y_k.
    """
    rom = design.rom
    A, B, C = dense(rom.A), dense(rom.B), dense(rom.C)
    K, L = design.K, design.L
    y = np.asarray(y, dtype=float).ravel()
    if y.size != rom.p:
        raise ValueError(f"dimension mismatch: measurement has length {y.size}, expected {rom.p}")
    x_bar, x_hat = state.x_bar, state.x_hat
    fb = K @ (x_hat - x_bar)
    solve_time = 0.0
    cost = np.nan
    warm = state.warm
    if state.k >= state.k0:
        t0 = time.perf_counter()
        sol = _solve_cached(ocp_spec, x_bar, warm, cache)
        solve_time = time.perf_counter() - t0
        if sol.status.status != OPTIMAL:
            raise RuntimeFailure(f"OCP {sol.status.status} at step {state.k}", state, state.k, sol.status)
        u_bar = sol.u0
        u = u_bar + fb
        warm = sol
        cost = sol.cost
        status = "optimal"
        phase = "rompc"
    else:
        startup = startup or StartupPolicy()
        u = startup.control(state.k, x_hat, x_bar, K, rom.m)
        u_bar = u - fb
        status = "startup"
        phase = "startup"
    new = ControllerState(A @ x_bar + B @ u_bar, A @ x_hat + B @ u + L @ (y - C @ x_hat), state.k + 1,
                          state.k0, phase if state.k + 1 < state.k0 else "rompc", warm,
                          state.t + (design.dt or 1.0))
    return u, new, StepInfo(u_bar, status, solve_time, cost)


# --------------------------------------------------------------------------
# setpoints
# --------------------------------------------------------------------------

@dataclass
class SetpointTarget:
    r: np.ndarray
    x_f_inf: np.ndarray
    u_inf: np.ndarray
    x_hat_inf: np.ndarray
    x_bar_inf: np.ndarray
    u_bar_inf: np.ndarray
    residuals: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def pair(self):
        return self.x_bar_inf, self.u_bar_inf


def selector(indices, o):
    """Rows of the o x o identity picked by (0-based) ``indices``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=int))
    if np.any(idx < 0) or np.any(idx >= o):
        raise SetpointError(f"tracked indices {idx.tolist()} outside 0..{o - 1}")
    return np.eye(o)[idx]


def _square_solve(S, rhs, what):
    if sp.issparse(S):
        try:
            lu = spla.splu(sp.csc_matrix(S))
        except RuntimeError as exc:
            raise SetpointError(f"{what} is singular") from exc
        sol = lu.solve(rhs)
    else:
        S = np.asarray(S)
        sv = np.linalg.svd(S, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise SetpointError(f"{what} is singular (rank deficient)")
        sol = np.linalg.solve(S, rhs)
    res = float(np.linalg.norm(S @ sol - rhs))
    return sol, res


def compute_setpoint_targets(fom, rom, design, T, r, Z=None, U=None, check=True):
    """Steady states of plant, estimator and simulated model for setpoint ``r`` of ``T z``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    r = np.asarray(r, dtype=float).ravel()
    nf, m = fom.n, fom.m
    n = rom.n
    if T.shape != (r.size, fom.o):
        raise SetpointError(f"dimension mismatch: T is {T.shape}, r has length {r.size}, o = {fom.o}")
    if r.size != m:
        raise SetpointError(f"the number of tracked variables ({r.size}) must equal the number of inputs ({m})")
    Af, Bf, Cf, Hf = fom.A, dense(fom.B), fom.C, fom.H
    I = sp.identity(nf, format="csr") if sp.issparse(Af) else np.eye(nf)
    TH = T @ dense(Hf)
    if sp.issparse(Af):
        Sf = sp.bmat([[Af - I, sp.csr_matrix(Bf)], [sp.csr_matrix(TH), None]], format="csc")
    else:
        Sf = np.block([[Af - I, Bf], [TH, np.zeros((r.size, m))]])
    rhs = np.concatenate([np.zeros(nf), r])
    sol, res_f = _square_solve(Sf, rhs, "S^f")
    x_f, u_inf = sol[:nf], sol[nf:]
    A, B, C = dense(rom.A), dense(rom.B), dense(rom.C)
    K, L = design.K, design.L
    x_hat = np.linalg.solve(np.eye(n) - (A - L @ C), B @ u_inf + L @ (dense(Cf) @ x_f))
    S = np.block([[A - np.eye(n), B], [K, -np.eye(m)]])
    sol2, res_r = _square_solve(S, np.concatenate([np.zeros(n), K @ x_hat - u_inf]), "S")
    x_bar, u_bar = sol2[:n], sol2[n:]
    res_e = float(np.linalg.norm((np.eye(n) - (A - L @ C)) @ x_hat - B @ u_inf - L @ (dense(Cf) @ x_f)))
    tgt = SetpointTarget(r, x_f, u_inf, x_hat, x_bar, u_bar,
                         residuals={"fom": res_f, "estimator": res_e, "rom": res_r})
    scale = 1.0 + np.linalg.norm(sol) + np.linalg.norm(sol2)
    if max(tgt.residuals.values()) > 1e-8 * scale:
        raise SetpointError(f"steady-state residuals too large: {tgt.residuals}")
    z_inf = dense(Hf) @ x_f
    z_bar = dense(rom.H) @ x_bar
    margins = {}
    for name, S_, pt in (("Z", Z, z_inf), ("U", U, u_inf), ("Z_bar", design.Z_bar, z_bar),
                         ("U_bar", design.U_bar, u_bar)):
        if S_ is not None:
            margins[name] = S_.b - S_.H @ pt
    tgt.margins = margins
    if check:
        bad = {k: v for k, v in margins.items() if np.any(v < 0)}
        if bad:
            desc = "; ".join(f"{k}: min margin {np.min(v):.4g}" for k, v in bad.items())
            raise SetpointError(f"setpoint target violates the constraints ({desc})")
    return tgt


# --------------------------------------------------------------------------
# disturbances
# --------------------------------------------------------------------------

class DisturbanceSampler:
    """Draws w_k in W and v_k in V per policy ``zero``, ``uniform`` or ``vertex``."""

    def __init__(self, W, V, m_w, p, policy="uniform", seed=None):
        if policy not in ("zero", "uniform", "vertex"):
            raise ValueError(f"unknown disturbance policy {policy!r}")
        self.W, self.V, self.m_w, self.p = W, V, m_w, p
        self.policy = policy
        self.rng = np.random.default_rng(seed)
        self._verts = {}

    def _draw(self, S, d):
        if S is None or self.policy == "zero" or d == 0:
            return np.zeros(d)
        if S.is_box:
            lo, hi = S.bounds
            if self.policy == "uniform":
                return lo + (hi - lo) * self.rng.random(d)
            return np.where(self.rng.random(d) < 0.5, lo, hi)
        if self.policy == "vertex":
            key = id(S)
            if key not in self._verts:
                self._verts[key] = S.vertices()
            V = self._verts[key]
            return V[self.rng.integers(V.shape[0])].copy()
        lo, hi = S.bounding_box()
        for _ in range(10000):
            x = lo + (hi - lo) * self.rng.random(d)
            if S.contains(x):
                return x
        raise RuntimeError("rejection sampling of the disturbance set failed")

    def draw(self):
        return self._draw(self.W, self.m_w), self._draw(self.V, self.p)


# --------------------------------------------------------------------------
# closed loop
# --------------------------------------------------------------------------

def simulate_closed_loop(problem, design, steps, k0=None, disturbance_policy="uniform", x_f_init=None,
                         seed=None, setpoint=None, tracked=None, startup=None, ocp_spec=None, cache=None,
                         strict=True):
    """Plant + estimator + simulated model for ``k0`` startup steps and ``steps`` online steps.

    ``setpoint`` (with ``tracked`` output indices, default the first m
    outputs) retargets the OCP; ``ocp_spec`` overrides it entirely.  With
    ``strict`` an OCP failure raises :class:`RuntimeFailure`; otherwise the
    log ends at the failing step with that status.
    """
    fom = problem.fom
    if not fom.discrete:
        raise ValueError("simulate_closed_loop needs a discrete plant; use simulate_closed_loop_ct")
    check_compatible(problem, design)
    tau = problem.tau
    k0 = 2 * tau if k0 is None else int(k0)
    if ocp_spec is None:
        target = None
        if setpoint is not None:
            T = selector(range(fom.m) if tracked is None else tracked, fom.o)
            tgt = compute_setpoint_targets(fom, design.rom, design, T, setpoint, problem.Z, problem.U)
            target = tgt.pair
        ocp_spec = ocp_spec_from_design(design, target)
    sampler = DisturbanceSampler(problem.W, problem.V, fom.m_w, fom.p, disturbance_policy, seed)
    Af, Bf, Bw, Cf, Hf = fom.A, dense(fom.B), dense(fom.B_w), fom.C, fom.H
    x = np.zeros(fom.n) if x_f_init is None else np.asarray(x_f_init, dtype=float).copy()
    state = ControllerState.initial(design.rom.n, k0)
    total = k0 + int(steps)
    n, m, p, o, m_w = design.rom.n, fom.m, fom.p, fom.o, fom.m_w
    rec = {k: [] for k in ("x_bar", "x_hat", "u", "u_bar", "y", "z", "z_bar", "w", "v")}
    status, stime = [], []
    H_r = dense(design.rom.H)
    failure = None
    for k in range(total):
        w, v = sampler.draw()
        y = np.asarray(Cf @ x).ravel() + v
        z = np.asarray(Hf @ x).ravel()
        try:
            u, new, info = rompc_step(state, y, design, ocp_spec, startup, cache)
        except RuntimeFailure as exc:
            if strict:
                raise
            failure = exc
            break
        rec["x_bar"].append(state.x_bar)
        rec["x_hat"].append(state.x_hat)
        rec["u"].append(u)
        rec["u_bar"].append(info.u_bar)
        rec["y"].append(y)
        rec["z"].append(z)
        rec["z_bar"].append(H_r @ state.x_bar)
        rec["w"].append(w)
        rec["v"].append(v)
        status.append(info.status)
        stime.append(info.solve_time)
        x = np.asarray(Af @ x).ravel() + Bf @ u + (Bw @ w if m_w else 0.0)
        state = new
    K_ = len(status)

    def arr(key, d):
        return np.array(rec[key]).reshape(K_, d)

    log = TrajectoryLog(np.arange(K_), np.arange(K_) * fom.dt, arr("x_bar", n), arr("x_hat", n), arr("u", m),
                        arr("u_bar", m), arr("y", p), arr("z", o), arr("z_bar", o), arr("w", m_w), arr("v", p),
                        status, np.array(stime), k0=k0,
                        meta={"seed": seed, "policy": disturbance_policy, "x_f_final": x})
    if failure is not None:
        log.meta["failure"] = str(failure)
    return log


def check_compatible(problem, design):
    fom, rom = problem.fom, design.rom
    if design.basis.V.shape[0] != fom.n:
        raise ValueError(f"dimension mismatch: design basis has {design.basis.V.shape[0]} rows, plant has "
                         f"{fom.n} states")
    if (rom.m, rom.p, rom.o) != (fom.m, fom.p, fom.o):
        raise ValueError("dimension mismatch between design and plant inputs/outputs")
    if design.Z_bar.dim != problem.Z.dim or design.U_bar.dim != problem.U.dim:
        raise ValueError("dimension mismatch between design and problem constraint sets")


@dataclass
class LogCheck:
    z_violations: int
    u_violations: int
    tube_z: np.ndarray
    tube_u: np.ndarray
    tube_ok: bool


def check_log(log, problem, design, slack=1e-9):
    """Constraint violations and tube excursions for k >= k0."""
    sl = slice(log.k0, None)
    Z, U = problem.Z, problem.U
    z, u = log.z[sl], log.u[sl]
    zv = int(np.sum(np.any(z @ Z.H.T > Z.b + slack, axis=1)))
    uv = int(np.sum(np.any(u @ U.H.T > U.b + slack, axis=1)))
    ez = (log.z[sl] - log.z_bar[sl]) @ design.Z_bar.H.T
    eu = (log.u[sl] - log.u_bar[sl]) @ design.U_bar.H.T
    tz = np.max(ez, axis=0, initial=-np.inf)
    tu = np.max(eu, axis=0, initial=-np.inf)
    ok = bool(np.all(tz <= design.delta_z + slack) and np.all(tu <= design.delta_u + slack))
    return LogCheck(zv, uv, tz, tu, ok)


@dataclass
class MonteCarloSummary:
    runs: int
    z_violations: int
    u_violations: int
    infeasible: int
    tube_z: np.ndarray
    tube_u: np.ndarray
    tube_ok: bool
    per_policy: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.z_violations == 0 and self.u_violations == 0 and self.infeasible == 0 and self.tube_ok

    def to_dict(self):
        return {"runs": self.runs, "z_violations": self.z_violations, "u_violations": self.u_violations,
                "infeasible": self.infeasible, "tube_z_max": self.tube_z.tolist(),
                "tube_u_max": self.tube_u.tolist(), "tube_ok": self.tube_ok, "ok": self.ok,
                "per_policy": self.per_policy}


def _mc_chunk(problem, design, spec, runs, steps, k0, startup, slack, keep_logs):
    """Runs ``(index, policy, seed)`` in order with one shared OCP memo."""
    cache = {}
    out = []
    for i, pol, seed in runs:
        lg = simulate_closed_loop(problem, design, steps, k0, pol, seed=seed, ocp_spec=spec, cache=cache,
                                  startup=startup, strict=False)
        out.append((i, pol, check_log(lg, problem, design, slack), "failure" in lg.meta,
                    lg if i < keep_logs else None))
    return out


def monte_carlo(problem, design, runs, steps, policies=("uniform",), seed=0, k0=None, setpoint=None,
                tracked=None, startup=None, keep_logs=0, slack=1e-9, jobs=1):
    """Independent seeded runs split evenly over ``policies``.

    Run i uses policy ``policies[i % len(policies)]`` and the i-th child of
    ``SeedSequence(seed)``, so results do not depend on ``jobs``.  The OCP
    data (and terminal set) are built once; OCP solves are memoized exactly
    on their inputs, which pays off because the simulated model does not
    see the disturbances.
    """
    fom = problem.fom
    target = None
    if setpoint is not None:
        T = selector(range(fom.m) if tracked is None else tracked, fom.o)
        target = compute_setpoint_targets(fom, design.rom, design, T, setpoint, problem.Z, problem.U).pair
    spec = ocp_spec_from_design(design, target)
    seeds = np.random.SeedSequence(seed).spawn(runs)
    plan = [(i, policies[i % len(policies)], seeds[i]) for i in range(runs)]
    if jobs and jobs > 1 and runs > 1:
        chunks = [plan[c::jobs] for c in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_mc_chunk, problem, design, spec, ch, steps, k0, startup, slack, keep_logs)
                    for ch in chunks if ch]
            results = sorted((r for f in futs for r in f.result()), key=lambda r: r[0])
    else:
        results = _mc_chunk(problem, design, spec, plan, steps, k0, startup, slack, keep_logs)
    tz = np.full(design.delta_z.size, -np.inf)
    tu = np.full(design.delta_u.size, -np.inf)
    zv = uv = infeasible = 0
    per = {}
    logs = []
    for _, pol, c, failed, lg in results:
        zv += c.z_violations
        uv += c.u_violations
        infeasible += int(failed)
        tz = np.maximum(tz, c.tube_z)
        tu = np.maximum(tu, c.tube_u)
        d = per.setdefault(pol, {"runs": 0, "z_violations": 0, "u_violations": 0, "infeasible": 0})
        d["runs"] += 1
        d["z_violations"] += c.z_violations
        d["u_violations"] += c.u_violations
        d["infeasible"] += int(failed)
        if lg is not None:
            logs.append(lg)
    ok = bool(np.all(tz <= design.delta_z + slack) and np.all(tu <= design.delta_u + slack))
    summary = MonteCarloSummary(runs, zv, uv, infeasible, tz, tu, ok, per)
    return summary, logs


# --------------------------------------------------------------------------
# continuous time
# --------------------------------------------------------------------------

def zoh_discretize(ct_model, dt):
    """Exact zero-order-hold equivalent with period ``dt`` (B and B_w alike)."""
    if ct_model.discrete:
        raise ValueError("model is already discrete")
    if not dt > 0:
        raise ValueError("dt must be positive")
    Bin = np.hstack([dense(ct_model.B), dense(ct_model.B_w)])
    Ad, Bd = zoh(ct_model.A, Bin, dt)
    m = ct_model.m
    return StateSpaceModel(Ad, Bd[:, :m], dense(ct_model.C), dense(ct_model.H),
                           Bd[:, m:] if ct_model.m_w else None, dt=dt)


class CtMaps:
    """ZOH maps of the simulated model and the estimator over one control period."""

    def __init__(self, design, dt_ctrl):
        rom = design.rom_ct
        A, B, C = dense(rom.A), dense(rom.B), dense(rom.C)
        L = design.L
        m = rom.m
        self.Ar, self.Br = zoh(A, B, dt_ctrl)
        Ae, Be = zoh(A - L @ C, np.hstack([B, L]), dt_ctrl)
        self.Ae, self.Beu, self.Bey = Ae, Be[:, :m], Be[:, m:]
        self.dt = dt_ctrl


def rompc_step_ct(state, y, design, dt_ctrl, dt_ocp, ocp_spec, startup=None, maps=None, cache=None):
    """One control period of the sampled continuous-time loop.

    The OCP is solved on the ZOH model of period ``dt_ocp`` whenever the
    time since handover is a multiple of it; u_bar is held in between.  The
    simulated model and the estimator advance exactly over ``dt_ctrl`` with
    u and y held.
    """
    ratio = dt_ocp / dt_ctrl
    q = int(round(ratio))
    if dt_ctrl > dt_ocp or abs(ratio - q) > 1e-9 * ratio:
        raise ValueError("dt_ocp must be an integer multiple of dt_ctrl")
    maps = maps or CtMaps(design, dt_ctrl)
    y = np.asarray(y, dtype=float).ravel()
    K = design.K
    x_bar, x_hat = state.x_bar, state.x_hat
    fb = K @ (x_hat - x_bar)
    warm, solve_time, cost = state.warm, 0.0, np.nan
    u_bar_hold = state.u_bar_hold
    if state.k >= state.k0:
        if (state.k - state.k0) % q == 0:
            t0 = time.perf_counter()
            sol = _solve_cached(ocp_spec, x_bar, warm, cache)
            solve_time = time.perf_counter() - t0
            if sol.status.status != OPTIMAL:
                raise RuntimeFailure(f"OCP {sol.status.status} at t = {state.t:.6g}", state, state.k, sol.status)
            u_bar_hold, warm, cost = sol.u0, sol, sol.cost
        u_bar = u_bar_hold
        u = u_bar + fb
        status = "optimal"
    else:
        startup = startup or StartupPolicy()
        u = startup.control(state.k, x_hat, x_bar, K, design.rom.m)
        u_bar = u - fb
        status = "startup"
    new = ControllerState(maps.Ar @ x_bar + maps.Br @ u_bar,
                          maps.Ae @ x_hat + maps.Beu @ u + maps.Bey @ y,
                          state.k + 1, state.k0, "rompc" if state.k + 1 >= state.k0 else "startup", warm,
                          state.t + dt_ctrl, u_bar_hold)
    return u, new, StepInfo(u_bar, status, solve_time, cost)


def simulate_closed_loop_ct(problem, design, duration, dt_ctrl, t0=0.0, disturbance_policy="zero",
                            x_f_init=None, seed=None, setpoint=None, tracked=None, startup=None):
    """Sampled continuous-time loop: exact ZOH plant over each control period.

    ``t0`` is the handover time (a multiple of ``dt_ctrl``); the OCP runs on
    the design's ZOH model every ``design.dt`` seconds after it.
    """
    fom = problem.fom
    if fom.discrete or not design.continuous:
        raise ValueError("simulate_closed_loop_ct needs a continuous plant and a continuous design")
    check_compatible(problem, design)
    n_ctrl = int(round(duration / dt_ctrl))
    k0 = int(round(t0 / dt_ctrl))
    target = None
    if setpoint is not None:
        T = selector(range(fom.m) if tracked is None else tracked, fom.o)
        tgt = compute_setpoint_targets(_equilibrium_model(fom), _equilibrium_model(design.rom_ct), _ct_gains(design),
                                       T, setpoint,
                                       problem.Z, problem.U)
        target = tgt.pair
    spec = ocp_spec_from_design(design, target)
    plant = zoh_discretize(fom.densified() if fom.n <= 4000 else fom, dt_ctrl)
    maps = CtMaps(design, dt_ctrl)
    sampler = DisturbanceSampler(problem.W, problem.V, fom.m_w, fom.p, disturbance_policy, seed)
    x = np.zeros(fom.n) if x_f_init is None else np.asarray(x_f_init, dtype=float).copy()
    state = ControllerState.initial(design.rom.n, k0)
    n, m, p, o, m_w = design.rom.n, fom.m, fom.p, fom.o, fom.m_w
    rec = {k: [] for k in ("x_bar", "x_hat", "u", "u_bar", "y", "z", "z_bar", "w", "v")}
    status, stime, xs = [], [], []
    H_r = dense(design.rom.H)
    Cf, Hf = dense(fom.C), dense(fom.H)
    for k in range(n_ctrl):
        w, v = sampler.draw()
        y = Cf @ x + v
        u, new, info = rompc_step_ct(state, y, design, dt_ctrl, design.dt, spec, startup, maps)
        for key, val in (("x_bar", state.x_bar), ("x_hat", state.x_hat), ("u", u), ("u_bar", info.u_bar),
                         ("y", y), ("z", Hf @ x), ("z_bar", H_r @ state.x_bar), ("w", w), ("v", v)):
            rec[key].append(val)
        status.append(info.status)
        stime.append(info.solve_time)
        xs.append(x)
        x = plant.A @ x + plant.B @ u + (plant.B_w @ w if m_w else 0.0)
        state = new
    K_ = len(status)

    def arr(key, d):
        return np.array(rec[key]).reshape(K_, d)

    log = TrajectoryLog(np.arange(K_), np.arange(K_) * dt_ctrl, arr("x_bar", n), arr("x_hat", n), arr("u", m),
                        arr("u_bar", m), arr("y", p), arr("z", o), arr("z_bar", o), arr("w", m_w), arr("v", p),
                        status, np.array(stime), k0=k0,
                        meta={"seed": seed, "policy": disturbance_policy, "x_f": np.array(xs).reshape(K_, fom.n)})
    return log


def _equilibrium_model(fom):
    """Model with A + I: its fixed points are the equilibria of the continuous model."""
    A = fom.A + (sp.identity(fom.n, format="csr") if sp.issparse(fom.A) else np.eye(fom.n))
    return StateSpaceModel(A, fom.B, fom.C, fom.H, fom.B_w if fom.m_w else None, dt=1.0)


def _ct_gains(design):
    return SimpleNamespace(K=design.K, L=design.L, Z_bar=design.Z_bar, U_bar=design.U_bar)


__all__ = ["ControllerState", "StartupPolicy", "StepInfo", "SetpointTarget", "RuntimeFailure", "SetpointError",
           "rompc_step", "rompc_step_ct", "simulate_closed_loop", "simulate_closed_loop_ct",
           "compute_setpoint_targets", "zoh_discretize", "DisturbanceSampler", "check_log", "monte_carlo",
           "MonteCarloSummary", "LogCheck", "selector", "check_compatible", "CtMaps", "OcpError", "Polytope"]
