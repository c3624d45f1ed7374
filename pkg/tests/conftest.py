import numpy as np
import pytest

from gkplattice.lattice import build_grid, eigensolve
from gkplattice.units import UnitSystem, load_species

DEPTH = 1500.0


@pytest.fixture(scope="session")
def rb_units():
    return UnitSystem(load_species("Rb87"), 785e-9)


@pytest.fixture(scope="session")
def grid512():
    return build_grid(1, 512)


@pytest.fixture(scope="session")
def basis512(grid512):
    """Periodic single-cell basis used by the propagator and optimiser."""
    return eigensolve(grid512, DEPTH, boundary="periodic")


@pytest.fixture(scope="session")
def basis_hw():
    """Hard-wall single-cell basis."""
    return eigensolve(build_grid(1, 256), DEPTH)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
