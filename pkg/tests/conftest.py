import numpy as np
import pytest

from clocksync import harness as hs


@pytest.fixture(scope="session")
def small_dataset():
    return hs.simulate(hs.ScenarioConfig(steps=3000, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
