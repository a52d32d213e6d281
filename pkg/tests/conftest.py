"""Shared fixtures: the expensive trajectories are integrated once per session."""
import pytest

from bklcone import IntegratorParams, detect_reflections, epoch_segments, exact_state, integrate
from bklcone.cli import load_config


@pytest.fixture(scope="session")
def generic_config():
    return load_config("generic-collapse")


@pytest.fixture(scope="session")
def generic_traj(generic_config):
    """The shipped generic-collapse preset run (horizon 100, tight tolerances)."""
    return integrate(generic_config.ic, generic_config.params)


@pytest.fixture(scope="session")
def generic_events(generic_traj):
    return detect_reflections(generic_traj)


@pytest.fixture(scope="session")
def generic_records(generic_traj, generic_events):
    return epoch_segments(generic_traj, generic_events, delta=0.01)


@pytest.fixture(scope="session")
def exact_traj():
    """Integration of the exact initial condition from tau=1 to tau=100."""
    ic = exact_state(1.0)
    params = IntegratorParams(t_end=100.0, rel_tol=1e-13, abs_tol=1e-15)
    return integrate(ic, params)


@pytest.fixture(scope="session")
def oracle_traj():
    """Exact IC integrated at the documented oracle tolerances (tau 1 -> 10)."""
    ic = exact_state(1.0)
    params = IntegratorParams(t_end=10.0, rel_tol=1e-10, abs_tol=1e-12)
    return integrate(ic, params)
