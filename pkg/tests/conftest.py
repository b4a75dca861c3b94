import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shrinklab.interval_maps import make_builtin

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def doubling():
    return make_builtin("doubling")


@pytest.fixture(scope="session")
def golden():
    return make_builtin("beta_map", beta="golden")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
