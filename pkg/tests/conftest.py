import numpy as np
import pytest

from quasiloc.frequency import standard_frequency
from quasiloc.operators import OperatorSpec


@pytest.fixture(scope="session")
def golden():
    return standard_frequency("golden", 1)


@pytest.fixture()
def small_spec():
    return OperatorSpec(d=1, nu=1, eps=0.05, delta=0.02, b=1.0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
