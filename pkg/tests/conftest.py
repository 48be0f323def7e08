import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

from adamabc.core import HyperParams, with_dim
from adamabc.optimizer import run_trajectory
from adamabc.problems import default_suite, make_noisy_quadratic


@pytest.fixture(scope="session")
def suite():
    return default_suite()


@pytest.fixture(scope="session")
def quad10():
    return make_noisy_quadratic(np.linspace(1.0, 4.0, 10), sigma=1.0)


@pytest.fixture(scope="session")
def quad10_noiseless():
    return make_noisy_quadratic(np.linspace(1.0, 4.0, 10), sigma=0.0)


@pytest.fixture(scope="session")
def h10():
    return HyperParams(dim=10)


@pytest.fixture(scope="session")
def trace2k(quad10, h10):
    """One medium trajectory shared by the read-only diagnostic tests."""
    return run_trajectory(quad10, h10, T=2000, seed=0)
