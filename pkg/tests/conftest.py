import numpy as np
import pytest

from dynten import stock_registry, define_format


@pytest.fixture(scope="session")
def reg():
    return stock_registry()


@pytest.fixture(scope="session")
def fmt(reg):
    def make(name, *levels):
        return define_format(name, levels, reg)
    return make


@pytest.fixture()
def rng():
    return np.random.default_rng(0xD17E)


def random_matrix(rng, n, m, density):
    a = rng.random((n, m)) + 0.5
    return np.where(rng.random((n, m)) < density, a, 0.0)


def random_vector(rng, n, density=None):
    a = rng.random(n) + 0.5
    if density is None:
        return a
    return np.where(rng.random(n) < density, a, 0.0)
