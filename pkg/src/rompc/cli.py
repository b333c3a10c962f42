"""Command-line front end.

Exit codes: 0 success, 1 synthesis or validation failure, 2 usage or
compatibility error.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("rompc")


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("ROMPC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _vector(text):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma separated vector, got {text!r}") from exc


def _indices(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated indices, got {text!r}") from exc


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _load_problem(path):
    from .model_io import ManifestError, load_problem
    from .system import DimensionError

    try:
        return load_problem(path)
    except (FileNotFoundError, ManifestError, DimensionError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot load manifest {path}: {exc}") from exc


def _load_design(path):
    from .model_io import DesignFormatError, load_design

    try:
        return load_design(path)
    except (OSError, DesignFormatError, ValueError) as exc:
        raise UsageError(f"cannot load design {path}: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_synth(args):
    from .model_io import save_design
    from .pipeline import StageError, synthesize

    problem = _load_problem(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    try:
        design, report = synthesize(problem, tau=args.tau, eta=args.eta, gamma_reg=args.gamma_reg,
                                    skip_delta1=args.skip_delta1, horizon=args.horizon, jobs=args.jobs)
    except StageError as exc:
        _write_json(os.path.join(args.out, "report.json"),
                    {"status": "failed", "stage": exc.stage, "error": str(exc.cause)})
        print(f"synthesis failed in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return EXIT_FAIL
    report["status"] = "ok"
    save_design(design, os.path.join(args.out, "design.json"))
    _write_json(os.path.join(args.out, "report.json"), report)
    print(_render(report))
    return EXIT_OK


def cmd_bounds(args):
    from .model_io import save_design
    from .pipeline import rebound

    problem = _load_problem(args.manifest)
    design = _load_design(args.design)
    _compatible(problem, design)
    tau = problem.tau if args.tau is None else args.tau
    try:
        new, rep = rebound(problem, design, tau, args.eta, args.skip_delta1, args.jobs)
    except Exception as exc:
        print(f"bound computation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    os.makedirs(args.out, exist_ok=True)
    save_design(new, os.path.join(args.out, "design.json"))
    _write_json(os.path.join(args.out, "report.json"), new.report)
    print(_render(new.report))
    return EXIT_OK


def _compatible(problem, design):
    from .runtime import check_compatible

    try:
        check_compatible(problem, design)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_simulate(args):
    from .model_io import write_trajectory
    from .runtime import RuntimeFailure, SetpointError, StartupPolicy, monte_carlo

    problem = _load_problem(args.manifest)
    design = _load_design(args.design)
    _compatible(problem, design)
    if design.continuous:
        raise UsageError("the simulate subcommand drives discrete designs; use the Python API for sampled "
                         "continuous loops")
    sim = problem.simulation
    steps = args.steps if args.steps is not None else int(sim.get("steps", 400))
    runs = args.runs if args.runs is not None else int(sim.get("runs", 1))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    k0 = args.k0 if args.k0 is not None else sim.get("k0")
    setpoint = args.setpoint if args.setpoint is not None else sim.get("setpoint")
    tracked = args.tracked if args.tracked is not None else sim.get("tracked")
    policy = args.disturbance or sim.get("disturbance", "uniform")
    policies = ("uniform", "vertex") if policy == "mixed" else (policy,)
    startup = StartupPolicy(sim.get("startup", "tracking") if isinstance(sim.get("startup"), str) else "tracking")
    if setpoint is not None and len(setpoint) and tracked is None:
        tracked = list(range(problem.fom.m))
    if setpoint is not None and len(setpoint) != problem.fom.m:
        raise UsageError(f"--setpoint needs {problem.fom.m} values")
    os.makedirs(args.out, exist_ok=True)
    try:
        summary, logs = monte_carlo(problem, design, runs, steps, policies, seed, k0, setpoint, tracked, startup,
                                    keep_logs=min(runs, args.keep_logs), jobs=args.jobs)
    except SetpointError as exc:
        print(f"setpoint rejected: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except RuntimeFailure as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    ext = "csv" if args.format == "csv" else "json"
    for i, lg in enumerate(logs):
        write_trajectory(lg, os.path.join(args.out, f"run_{i:04d}.{ext}"), args.format)
    out = summary.to_dict()
    out.update(steps=steps, seed=seed, policies=list(policies), setpoint=setpoint, tracked=tracked)
    _write_json(os.path.join(args.out, "summary.json"), out)
    print(f"runs {summary.runs}: Z violations {summary.z_violations}, U violations {summary.u_violations}, "
          f"infeasible {summary.infeasible}, tube within bounds: {summary.tube_ok}")
    return EXIT_OK if summary.ok else EXIT_FAIL


def cmd_report(args):
    try:
        with open(args.report) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read report {args.report}: {exc}") from exc
    if "design.json" in os.path.basename(args.report) or report.get("format", "").startswith("rompc-design"):
        report = report.get("report", {})
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(_render(report))
    return EXIT_OK


def cmd_make_benchmark(args):
    from .benchmark import write_benchmark

    path = write_benchmark(args.out, n_full=args.n_full, rom_dim=args.rom_dim, tau=args.tau,
                           horizon=args.horizon)
    print(path)
    return EXIT_OK


def _fmt(v, spec=".4g"):
    if v is None:
        return "-"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x, spec) for x in v) + "]"
    return format(v, spec)


def _render(report):
    """Plain-text tables of the design summary and the bound results."""
    if report.get("status") == "failed":
        return f"failed in stage {report.get('stage')}: {report.get('error')}"
    d = report.get("dims", {})
    b = report.get("bounds", {})
    pct = b.get("percentages", {})
    lines = [
        "design",
        f"  n_f {d.get('n_full')}  n {d.get('n')}  m {d.get('m')}  p {d.get('p')}  o {d.get('o')}",
        f"  spectral radius of A_eps  {_fmt(report.get('rho_Aeps'))}",
        f"  relative H2 model error   {_fmt(report.get('R_H2'))}",
        f"  closed-loop H2 norm       {_fmt(report.get('closed_loop_h2'))}",
        f"  terminal constraint       {report.get('terminal')} ({report.get('terminal_rows')} rows)",
        "bounds",
        f"  tau {b.get('tau')}  delta1 {_fmt(b.get('delta1'))}{' (waived)' if b.get('delta1_waived') else ''}"
        f"  C_r {_fmt(b.get('C_r'))}  C_w {_fmt(b.get('C_w'))}",
        f"  delta_z {_fmt(b.get('delta_z'))}",
        f"  delta_u {_fmt(b.get('delta_u'))}",
        f"  r% {_fmt(pct.get('r'))}  t_z% max/min {_fmt(pct.get('t_z_max'))}/{_fmt(pct.get('t_z_min'))}"
        f"  t_u% max/min {_fmt(pct.get('t_u_max'))}/{_fmt(pct.get('t_u_min'))}",
    ]
    t = report.get("timings", {})
    if t:
        lines.append("timings [s]  " + "  ".join(f"{k} {v:.3g}" for k, v in t.items()))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rompc", description="Reduced-order model predictive control toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="offline synthesis from a problem manifest")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", default="out")
    s.add_argument("--tau", type=int)
    s.add_argument("--eta", type=float, help="fixed eta for the Lyapunov decay certificate")
    s.add_argument("--gamma-reg", type=float)
    s.add_argument("--skip-delta1", action="store_true", help="waive the tail bound term")
    s.add_argument("--horizon", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bounds", help="recompute bounds for a stored design")
    s.add_argument("manifest")
    s.add_argument("design")
    s.add_argument("-o", "--out", default="out")
    s.add_argument("--tau", type=int)
    s.add_argument("--eta", type=float)
    s.add_argument("--skip-delta1", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", help="closed-loop simulation of a stored design")
    s.add_argument("design")
    s.add_argument("manifest")
    s.add_argument("-o", "--out", default="sim")
    s.add_argument("--steps", type=int, help="steps after the handover")
    s.add_argument("--k0", type=int, help="handover step (default 2 tau)")
    s.add_argument("--runs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--setpoint", type=_vector)
    s.add_argument("--tracked", type=_indices, help="0-based indices of the tracked outputs")
    s.add_argument("--disturbance", choices=("zero", "uniform", "vertex", "mixed"))
    s.add_argument("--keep-logs", type=int, default=1, help="number of runs whose trajectories are written")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("report", help="render a stored report")
    s.add_argument("report")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("make-benchmark", help="write the bundled heat-equation manifest")
    s.add_argument("out")
    s.add_argument("--n-full", type=int, default=200)
    s.add_argument("--rom-dim", type=int, default=10)
    s.add_argument("--tau", type=int, default=300)
    s.add_argument("--horizon", type=int, default=20)
    s.set_defaults(func=cmd_make_benchmark)
    return p


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
