import numpy as np
import pytest

from hyperspot.dataio import SpatialCoords, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_synth():
    """3 domains x 12 spots x 10 genes; fast enough for unit tests."""
    return generate_synthetic(3, 12, 10, noise_sd=0.05, mix=0.0, seed=11)


@pytest.fixture
def grid_coords():
    """A 5x5 integer grid of spots."""
    pts = np.array([(x, y) for y in range(5) for x in range(5)], dtype=float)
    return SpatialCoords(pts, tuple(f"s{i}" for i in range(25)))
