import numpy as np
import pytest

from ddhelm.grid import GridSpec, build_grid
from ddhelm.interface_ops import despres_pair
from ddhelm.local_solve import Decomposition
from ddhelm.spectral import a_spectrum


@pytest.fixture(scope="session")
def grid33():
    return build_grid(GridSpec.square(32))


@pytest.fixture(scope="session")
def grid_small():
    # asymmetric split on a non-square rectangle
    return build_grid(GridSpec(Lx=1.3, Ly=0.9, nx=9, ny=7, split_ix=3))


@pytest.fixture(scope="session")
def dec33(grid33):
    return Decomposition(grid33, 1.0)


@pytest.fixture(scope="session")
def lap33(grid33):
    return Decomposition(grid33, 0.0)


@pytest.fixture(scope="session")
def pair33(dec33):
    return despres_pair(dec33, 1.0)


@pytest.fixture(scope="session")
def aspec33(grid33, pair33):
    return a_spectrum(grid33, 1.0, 1.0, pair=pair33)


@pytest.fixture(scope="session")
def sine33(grid33):
    return grid33.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
