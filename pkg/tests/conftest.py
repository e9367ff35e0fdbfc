import numpy as np
import pytest

from cftomo.topology import TreeTopology, routing_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_leaf():
    return routing_matrix(TreeTopology.two_leaf())


@pytest.fixture
def four_leaf():
    return routing_matrix(TreeTopology.four_leaf())
