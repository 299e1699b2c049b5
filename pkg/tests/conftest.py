import numpy as np
import pytest

from chanpred import SystemConfig, generate_trace


@pytest.fixture(scope="session")
def system():
    return SystemConfig()


@pytest.fixture(scope="session")
def trace10k(system):
    # shared 5 km/h reference trace, 10000 slots
    return generate_trace(system, 10000, seed=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
