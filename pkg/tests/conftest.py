import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hirenet.netcore import WeightedDigraph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_matrix(rng, n, lam=1.0, loops=True, density=1.0):
    Y = rng.poisson(lam, size=(n, n))
    if density < 1.0:
        Y = Y * (rng.random((n, n)) < density)
    if not loops:
        np.fill_diagonal(Y, 0)
    return Y


def strict_hierarchy(n, weight=1):
    return np.triu(np.full((n, n), weight), k=1)


@st.composite
def matrices(draw, min_n=2, max_n=8, max_value=5):
    n = draw(st.integers(min_n, max_n))
    return draw(hnp.arrays(np.int64, (n, n), elements=st.integers(0, max_value)))


@st.composite
def matrix_and_perm(draw, min_n=2, max_n=8):
    Y = draw(matrices(min_n, max_n))
    perm = draw(st.permutations(range(Y.shape[0])))
    return Y, np.array(perm)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph():
    Y = np.array([[1, 3, 0, 2],
                  [0, 0, 4, 1],
                  [1, 0, 2, 0],
                  [0, 1, 0, 0]])
    return WeightedDigraph(Y)
