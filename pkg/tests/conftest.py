import numpy as np
import pytest

import apfx


@pytest.fixture(scope="session")
def grid8():
    return apfx.make_grid(0.0, 1.0, 8)


@pytest.fixture(scope="session")
def grid64():
    return apfx.make_grid(0.0, 1.0, 64)


@pytest.fixture(scope="session")
def driver64(grid64):
    return apfx.sample_driver(grid64, 500, 1, seed=1234)


def random_ensemble(grid, M, d, seed, scale=1.0):
    """Gaussian node values; deterministic in the seed."""
    vals = np.empty((M, grid.N + 1, d))
    for m in range(M):
        vals[m] = apfx.substream(seed, m).standard_normal((grid.N + 1, d))
    return apfx.ensemble_from_values(grid, vals * scale)


@pytest.fixture(scope="session")
def brownian64(driver64):
    return apfx.driver_as_ensemble(driver64)
