import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixlimit.thermo import default_spec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def spec():
    return default_spec()


@pytest.fixture
def spec3():
    return default_spec(M=(1.0, 2.0, 3.0), vbar=(1.0, 2.0, 3.0), alpha=(2.0, 2.0, 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
