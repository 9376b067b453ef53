import numpy as np
import pytest
from hypothesis import settings

from cyclic_hitchin.geometry import DifferentialField, Domain, background_metric, build_grid

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture(scope="session")
def radial2000():
    return build_grid(Domain("radial-ball", 2000))


@pytest.fixture(scope="session")
def radial400():
    return build_grid(Domain("radial-ball", 400))


@pytest.fixture(scope="session")
def planar64():
    return build_grid(Domain("planar-ball", 64))


@pytest.fixture(scope="session")
def torus16():
    return build_grid(Domain("flat-torus", 16))


@pytest.fixture
def zq4():
    return DifferentialField(4, 1.0, (0,))


def metric_of(grid):
    return background_metric(grid)


def flat_state(spec, grid, h):
    """Tuple with constant h_k on a grid."""
    from cyclic_hitchin.hitchin_system import tuple_from_h
    H = np.repeat(np.asarray(h, float)[:, None], grid.size, axis=1)
    return tuple_from_h(H, spec, background_metric(grid))
