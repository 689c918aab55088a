import numpy as np
import pytest

from src.sim.gauss_core import build_covariance, make_sampler
from src.sim.streams import RandomStreams


@pytest.fixture
def streams():
    return RandomStreams(12345)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(2024))


@pytest.fixture
def sampler_factory():
    """Build a seeded sampler from (family, p, params)"""
    def build(family, p, params=(), seed=7, entries=None):
        return make_sampler(build_covariance(family, p, params, entries=entries), seed)
    return build


def within(estimate, reference, se, width=3.0):
    return abs(estimate - reference) <= width * se
