import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from asne.colony import ColonyConfig, build_colony
from asne.dataio import prepare, synth_series

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_colony():
    return build_colony(ColonyConfig(3, 2, 4, max_skip=2), np.random.default_rng(0))


@pytest.fixture(scope="session")
def sine_data():
    return prepare(synth_series("sine_mix", 128, 4, seed=0))
