import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rand64(rng, *shape):
    return rng.standard_normal(shape).astype(np.float64)
