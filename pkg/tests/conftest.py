import numpy as np
import pytest
from hypothesis import settings

from chaoskit.space import DiscreteSpace, rng_for

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return rng_for(20240517, 99)


@pytest.fixture
def space4():
    return DiscreteSpace(np.array([0.7, 1.3, 0.4, 2.1]))
