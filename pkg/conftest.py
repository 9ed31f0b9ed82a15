import numpy as np
import pytest

from grid import build_grid, sample


@pytest.fixture
def line():
    """(0, 1) with 41 nodes."""
    return build_grid(1, [41], [1.0])


@pytest.fixture
def square():
    """(0, 1) x (0, 2) with 9 x 13 nodes."""
    return build_grid(2, [9, 13], [1.0, 2.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def random_field(rng):
    def make(grid, scale=1.0):
        return sample(grid, lambda *x: scale * rng.standard_normal(grid.shape))
    return make
