import numpy as np
import pytest

from blochopt.bandlimited import make_grid
from blochopt.cell_spectral import PeriodicCoefficient

EPS_SWEEP = [2.0 ** -k for k in range(3, 8)]


@pytest.fixture(scope="session")
def cosine():
    return PeriodicCoefficient.cosine()


@pytest.fixture(scope="session")
def laminate():
    return PeriodicCoefficient.laminate([0.0, 0.5], [1.0, 4.0])


@pytest.fixture(scope="session")
def unit():
    return PeriodicCoefficient.constant(1.0)


@pytest.fixture(scope="session")
def grid():
    """K = [-2, 2] with d_eta = 1/8, valid for the dyadic sweep 2^-3 .. 2^-7."""
    return make_grid([2.0], 0.125, EPS_SWEEP)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
