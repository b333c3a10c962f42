"""Offline synthesis: reduction, gains, bounds, tightening and terminal ingredients."""
import logging
import time
import warnings

import numpy as np

from .bounds import compute_bounds, compute_bounds_ct
from .geometry import tighten
from .model_io import RompcDesign
from .ocp import TerminalSetError, regularize_cost, terminal_ingredients
from .reduction import ProjectionBasis, petrov_galerkin_project, reduce_model, relative_h2_error
from .linalg_core import solve_dare
from .runtime import zoh_discretize
from .synthesis import assemble_error_system, closed_loop_h2, riccati_gains
from .system import dense

log = logging.getLogger("rompc")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name, timings):
    class _Ctx:
        def __enter__(self):
            self.t0 = time.perf_counter()
            log.info("stage %s", name)

        def __exit__(self, exc_type, exc, tb):
            timings[name] = time.perf_counter() - self.t0
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


def reduce_problem(problem):
    """Projection basis and Hankel singular values for the manifest's reduction settings."""
    red = problem.reduction
    method = red.get("method", "balanced_truncation")
    if method == "basis":
        return ProjectionBasis(red["V"], red["W"]), np.zeros(0)
    if method != "balanced_truncation":
        raise ValueError(f"unknown reduction method {method!r}")
    basis, hsv, _ = reduce_model(problem.fom.densified() if problem.fom.n <= 4000 else problem.fom,
                                 problem.rom_dim)
    return basis, hsv


def projected_cost(problem, basis):
    V = basis.V
    if isinstance(problem.Qf, str):
        Q = V.T @ V
    else:
        Qf = problem.Qf
        Q = V.T @ (Qf @ V)
    return regularize_cost(np.asarray(Q), problem.gamma_reg)


def synthesize(problem, tau=None, eta=None, gamma_reg=None, skip_delta1=False, horizon=None, jobs=1,
               lp_method="auto"):
    """Run the offline stages in order; returns ``(design, report)``.

    Stage failures raise :class:`StageError` naming the stage.
    """
    timings = {}
    tau = problem.tau if tau is None else tau
    gamma_reg = problem.gamma_reg if gamma_reg is None else gamma_reg
    N = problem.N if horizon is None else horizon
    fom = problem.fom
    Z, U = problem.Z, problem.U
    bopt = problem.bounds
    continuous = not fom.discrete
    with _stage("reduction", timings):
        basis, hsv = reduce_problem(problem)
        rom, _ = petrov_galerkin_project(fom, basis)
        Q = projected_cost(problem, basis)
    with _stage("gains", timings):
        gains = riccati_gains(rom, problem.W_z, problem.W_u, gamma_reg, fom=fom, basis=basis, Hz=Z.H, Hu=U.H)
        err = assemble_error_system(fom, rom, basis, gains.K, gains.L, Z.H, U.H)
    with _stage("bounds", timings):
        if continuous:
            dt = float(problem.ocp.get("dt", bopt.get("dt", 0.0)))
            if not dt > 0:
                raise ValueError("continuous plants need ocp.dt (the OCP sampling period)")
            rom_d = zoh_discretize(rom, dt)
            rep = compute_bounds_ct(err, rom, Z, U, problem.W, problem.V, float(tau), float(bopt.get("dt", dt)),
                                    problem.eta_init, problem.i_bar, skip_delta1, bopt.get("alpha"), lp_method,
                                    dt_hold=dt)
        else:
            rom_d = rom
            rep = compute_bounds(err, rom, Z, U, problem.W, problem.V, int(tau), problem.eta_init,
                                 problem.i_bar, skip_delta1, bopt.get("decay", "auto"),
                                 eta if eta is not None else bopt.get("eta"), lp_method, jobs)
    with _stage("tightening", timings):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            Z_bar = tighten(Z, rep.delta_z)
            U_bar = tighten(U, rep.delta_u)
    with _stage("terminal", timings):
        R = problem.R
        terminal = problem.ocp.get("terminal", "set")
        fallback = bool(problem.ocp.get("equality_fallback", True))
        K_f = None
        if terminal == "set":
            try:
                P, K_f, X_f = terminal_ingredients(rom_d, Q, R, Z_bar, U_bar)
            except TerminalSetError:
                if not fallback:
                    raise
                warnings.warn("terminal set construction failed; using the terminal equality constraint",
                              RuntimeWarning, stacklevel=2)
                terminal, X_f = "equality", None
        else:
            X_f = None
        if terminal == "equality":
            P = solve_dare(dense(rom_d.A), dense(rom_d.B), Q, R)
            K_f = -np.linalg.solve(rom_d.B.T @ P @ rom_d.B + R, rom_d.B.T @ P @ rom_d.A)
    with _stage("report", timings):
        report = {
            "dims": {"n_full": fom.n, "n": rom.n, "m": fom.m, "p": fom.p, "o": fom.o, "m_w": fom.m_w},
            "continuous": continuous,
            "rho_Aeps": float(gains.rho_Aeps),
            "R_H2": _safe(lambda: relative_h2_error(fom.densified(), rom)) if fom.n <= 2000 else None,
            "closed_loop_h2": _safe(lambda: closed_loop_h2(err, problem.W_z, problem.W_u)) if fom.n <= 1000 else None,
            "hsv": [float(v) for v in hsv[: max(2 * rom.n, 1)]],
            "bounds": rep.summary(),
            "Xbar": {"lo": rep.Xbar.bounds[0].tolist(), "hi": rep.Xbar.bounds[1].tolist()},
            "terminal": terminal,
            "terminal_rows": None if X_f is None else int(X_f.n_rows),
            "gamma_reg": gamma_reg,
            "tau": tau,
            "N": N,
        }
        report["checks"] = {
            "closed_loop_stable": "pass" if gains.accepted else "fail",
            "delta1": "waived" if skip_delta1 else ("pass" if np.isfinite(rep.delta1) else "fail"),
            "tightened_sets_nonempty": "pass",
            "terminal_set": "pass" if X_f is not None else "skipped",
        }
    report["timings"] = timings
    design = RompcDesign(rom=rom_d, basis=basis, K=gains.K, L=gains.L, P=P, terminal_set=X_f,
                         delta_z=rep.delta_z, delta_u=rep.delta_u, Z_bar=Z_bar, U_bar=U_bar, Q=Q, R=R, N=N,
                         dt=rom_d.dt, K_f=K_f, terminal=terminal, allow_equality_fallback=fallback,
                         rom_ct=rom if continuous else None, Z=Z, U=U, report=report)
    design.bound_report = rep
    design.error_system = err
    return design, report


def _safe(fn):
    try:
        v = float(fn())
    except Exception as exc:  # diagnostics only
        log.warning("diagnostic failed: %s", exc)
        return None
    return v if np.isfinite(v) else None


def rebound(problem, design, tau, eta=None, skip_delta1=False, jobs=1, lp_method="auto"):
    """Recompute bounds (and everything downstream) for a stored design with a new tau."""
    fom = problem.fom
    rom_gain = design.rom_ct if design.continuous else design.rom
    err = assemble_error_system(fom, rom_gain, design.basis, design.K, design.L, problem.Z.H, problem.U.H)
    if design.continuous:
        bopt = problem.bounds
        rep = compute_bounds_ct(err, design.rom_ct, problem.Z, problem.U, problem.W, problem.V, float(tau),
                                float(bopt.get("dt", design.dt)), problem.eta_init, problem.i_bar, skip_delta1,
                                bopt.get("alpha"), lp_method, dt_hold=design.dt)
    else:
        rep = compute_bounds(err, design.rom, problem.Z, problem.U, problem.W, problem.V, int(tau),
                             problem.eta_init, problem.i_bar, skip_delta1, "auto", eta, lp_method, jobs)
    Z_bar = tighten(problem.Z, rep.delta_z)
    U_bar = tighten(problem.U, rep.delta_u)
    terminal, X_f, P = design.terminal, None, design.P
    if terminal == "set":
        try:
            P, _, X_f = terminal_ingredients(design.rom, design.Q, design.R, Z_bar, U_bar)
        except TerminalSetError:
            if not design.allow_equality_fallback:
                raise
            terminal = "equality"
    report = dict(design.report)
    report["bounds"] = rep.summary()
    report["tau"] = tau
    report["terminal"] = terminal
    new = RompcDesign(rom=design.rom, basis=design.basis, K=design.K, L=design.L, P=P, terminal_set=X_f,
                      delta_z=rep.delta_z, delta_u=rep.delta_u, Z_bar=Z_bar, U_bar=U_bar, Q=design.Q, R=design.R,
                      N=design.N, dt=design.dt, K_f=design.K_f, terminal=terminal,
                      allow_equality_fallback=design.allow_equality_fallback, rom_ct=design.rom_ct,
                      Z=problem.Z, U=problem.U, report=report)
    new.bound_report = rep
    return new, rep


__all__ = ["synthesize", "rebound", "StageError", "reduce_problem", "projected_cost"]
