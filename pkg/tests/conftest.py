import sys

import numpy as np
import pytest

from rompc.geometry import Polytope
from rompc.model_io import ProblemSpec
from rompc.system import StateSpaceModel


def scalar_model(a=0.5, b=1.0, c=1.0, h=1.0, bw=None, dt=1.0):
    return StateSpaceModel([[a]], [[b]], [[c]], [[h]], None if bw is None else [[bw]], dt=dt)


def two_state_ct_problem(W=0.5, V=0.01, rom_dim=1):
    """Small continuous plant with a weakly coupled slow mode."""
    A = np.array([[-3.0, 1.0], [0.0, -5.0]])
    fom = StateSpaceModel(A, [[0.0], [1.0]], [[1.0, 0.0]], np.eye(2), [[0.1], [0.0]], dt=None)
    return ProblemSpec(fom=fom, Z=Polytope.box([-1, -1], [1, 1]), U=Polytope.box([-2], [2]),
                       W=Polytope.box([-W], [W]) if W else None, V=Polytope.box([-V], [V]) if V else None,
                       rom_dim=rom_dim, N=10, tau=4.0, eta_init=1.0,
                       ocp={"dt": 0.1, "terminal": "set"}, bounds={"dt": 0.05})


def scalar_problem(W=0.01, V=0.01, tau=30):
    """Scalar plant a=0.5, b=1 reduced with the identity basis, so the ROM equals the plant."""
    fom = scalar_model(0.5, 1.0, bw=1.0)
    return ProblemSpec(fom=fom, Z=Polytope.box([-1.0], [1.0]), U=Polytope.box([-1.0], [1.0]),
                       W=Polytope.box([-W], [W]) if W else None, V=Polytope.box([-V], [V]) if V else None,
                       rom_dim=1, N=5, tau=tau, eta_init=1.0,
                       reduction={"method": "basis", "V": np.eye(1), "W": np.eye(1)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_heat():
    """Reduced-size heat problem and its synthesized design, shared across modules."""
    from rompc.benchmark import heat_benchmark
    from rompc.pipeline import synthesize

    problem = heat_benchmark(n_full=80, rom_dim=8, tau=150, horizon=10)
    design, report = synthesize(problem)
    return problem, design, report


@pytest.fixture(scope="session")
def scalar_design():
    from rompc.pipeline import synthesize

    problem = scalar_problem()
    design, _ = synthesize(problem)
    return problem, design


@pytest.fixture(scope="session")
def ct_design():
    from rompc.pipeline import synthesize

    problem = two_state_ct_problem()
    design, _ = synthesize(problem)
    return problem, design


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
