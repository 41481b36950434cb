import pathlib

import numpy as np
import pytest

from dcsurv.core import SurvivalDataset, TimeGrid


@pytest.fixture
def fixtures_dir():
    return pathlib.Path(__file__).parent / 'fixtures'


@pytest.fixture
def toy():
    # Two events, one censoring in between.
    return SurvivalDataset.from_times([1, 2, 3], [True, False, True])


@pytest.fixture
def grid3():
    return TimeGrid(nodes=[1, 2, 3])


@pytest.fixture
def random_dataset():
    def make(rng, n, censoring=0.4, num_features=0, integer_times=False):
        times = rng.integers(1, 20, size=n).astype(float) if integer_times \
            else rng.uniform(0.5, 20, size=n)
        return SurvivalDataset(
            features=rng.normal(size=(n, num_features)),
            times=times,
            events=rng.random(n) >= censoring)
    return make


@pytest.fixture
def random_curves():
    def make(rng, n, grid):
        hazards = rng.uniform(0, 0.4, size=(n, len(grid)))
        return np.cumprod(1.0 - hazards, axis=1)
    return make
