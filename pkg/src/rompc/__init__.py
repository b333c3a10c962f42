"""Reduced-order model predictive control for large linear systems."""
from .bounds import BoundReport, DecayParameters, compute_bounds, compute_bounds_ct, compute_xbar, delta2
from .geometry import Polytope
from .model_io import ProblemSpec, RompcDesign, TrajectoryLog, load_design, load_problem, save_design, save_problem
from .ocp import OcpSpec, build_qp, solve_ocp, terminal_ingredients
from .pipeline import synthesize
from .reduction import ProjectionBasis, balanced_truncation, petrov_galerkin_project, reduce_model
from .runtime import compute_setpoint_targets, rompc_step, simulate_closed_loop, zoh_discretize
from .synthesis import ErrorSystem, assemble_error_system, riccati_gains
from .system import StateSpaceModel

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DecayParameters",
    "compute_bounds",
    "compute_bounds_ct",
    "compute_xbar",
    "delta2",
    "Polytope",
    "ProblemSpec",
    "RompcDesign",
    "TrajectoryLog",
    "load_design",
    "load_problem",
    "save_design",
    "save_problem",
    "OcpSpec",
    "build_qp",
    "solve_ocp",
    "terminal_ingredients",
    "synthesize",
    "ProjectionBasis",
    "balanced_truncation",
    "petrov_galerkin_project",
    "reduce_model",
    "compute_setpoint_targets",
    "rompc_step",
    "simulate_closed_loop",
    "zoh_discretize",
    "ErrorSystem",
    "assemble_error_system",
    "riccati_gains",
    "StateSpaceModel",
]
