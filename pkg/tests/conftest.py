import math

import numpy as np
import pytest

from storagedp import StorageParams, get_backend
from storagedp.grid import Grid, build_transition_tables

ETA85 = math.sqrt(0.85)


@pytest.fixture
def tiny():
    """s_bar=1, delta=0.5, p_bar=1, eta=1: states [0, .5, 1], actions [-1, -.5, 0, .5, 1]."""
    params = StorageParams(1.0, 1.0, 1.0)
    grid = Grid.build(params, 0.5)
    return params, grid, build_transition_tables(grid)


@pytest.fixture(params=["reference", "parallel"])
def backend(request):
    return get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
