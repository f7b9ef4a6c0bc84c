import numpy as np
import pytest

import lorenzlab as ll
from lorenzlab.model import _orbit_kernel


def pytest_terminal_summary(terminalreporter):
    """Re-emit the acceptance criterion PASS/FAIL lines after the run (they
    are also streamed live under -s)."""
    try:
        from test_acceptance import CRITERION_LINES
    except Exception:
        return
    if CRITERION_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def classical():
    return ll.Params3()


@pytest.fixture(scope="session")
def mparams():
    return ll.ModelParams.classical()


@pytest.fixture(scope="session")
def long_orbit(mparams):
    """Burned-in quotient-map orbit shared across statistical tests."""
    orbit, n = _orbit_kernel(0.2345, 10_000_000, mparams.alpha, mparams.a_cusp)
    assert n == 10_000_001
    return orbit[1000:]


@pytest.fixture(scope="session")
def attractor_trajectory(classical):
    """Long flow trajectory on the attractor (transient removed)."""
    traj = ll.integrate(np.array([1.0, 1.0, 1.0]), classical, 300.0,
                        method="rk4", dt=1e-3, dense=False)
    keep = traj.t >= 30.0
    return traj.t[keep], traj.states[keep]
