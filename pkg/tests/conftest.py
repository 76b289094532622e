import numpy as np
import pytest

from robustse.power_model import ieee30_model


@pytest.fixture(scope="session")
def ieee30():
    return ieee30_model(100)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
