"""Bundled heat-equation benchmark problem."""
import os

import numpy as np

from .geometry import Polytope
from .model_io import ProblemSpec, save_problem
from .models import heat_equation


def heat_benchmark(n_full=200, rom_dim=10, tau=300, horizon=20, dt=0.01, continuous=False):
    """Boundary-controlled rod with two temperature constraints.

    z = temperatures at x = 0.5 and x = 0.25, |z| <= 1, |u| <= 2, a heat
    source disturbance |w| <= 0.5 on [0.4, 0.6] and sensor noise 0.01.
    The default scenario tracks z_2 = 0.95 after a 2 tau startup.
    """
    fom = heat_equation(n_full, dt=dt, continuous=continuous)
    ocp = {"N": horizon, "terminal": "set", "equality_fallback": True}
    if continuous:
        ocp["dt"] = dt
    return ProblemSpec(
        fom=fom,
        Z=Polytope.box([-1.0, -1.0], [1.0, 1.0], "Z"),
        U=Polytope.box([-2.0], [2.0], "U"),
        W=Polytope.box([-0.5], [0.5], "W"),
        V=Polytope.box([-0.01, -0.01], [0.01, 0.01], "V"),
        Qf="projected",
        R=np.eye(1),
        rom_dim=rom_dim,
        N=horizon,
        tau=tau,
        eta_init=1e10,
        i_bar=None,
        gamma_reg=1e-3,
        reduction={"method": "balanced_truncation"},
        bounds={"decay": "auto"},
        ocp=ocp,
        simulation={"k0": 2 * tau, "steps": 400, "disturbance": "uniform", "runs": 1, "seed": 0,
                    "tracked": [1], "setpoint": [0.95], "startup": "tracking"},
        name="heat-equation",
    ).validate()


def write_benchmark(directory, **kwargs):
    """Write the manifest and its Matrix Market files; returns the manifest path."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "manifest.json")
    save_problem(heat_benchmark(**kwargs), path)
    return path
