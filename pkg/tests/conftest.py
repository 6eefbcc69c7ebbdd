import numpy as np
import pytest

from aclab.connection1d import solve_connection, solve_halfline
from aclab.geometry import build_stadium
from aclab.potential import quartic_double_well, triple_well, two_well

SIGMA_EXACT = 2.0 * np.sqrt(2.0) / 3.0        # full-line action, quartic well
SIGMA_PLUS_EXACT = np.sqrt(2.0) / 3.0         # half-line action from z = 0


@pytest.fixture(scope="session")
def quartic():
    return quartic_double_well()


@pytest.fixture(scope="session")
def planar_two_well():
    return two_well()


@pytest.fixture(scope="session")
def planar_triple_well():
    return triple_well()


@pytest.fixture(scope="session")
def quartic_connection(quartic):
    return solve_connection(quartic, [-1.0])


@pytest.fixture(scope="session")
def quartic_halfline(quartic):
    return solve_halfline(quartic, [0.0])


@pytest.fixture(scope="session")
def small_stadium():
    return build_stadium(1.0, 1.0, 1.0 / 40)
