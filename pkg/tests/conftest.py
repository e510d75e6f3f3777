import numpy as np
import pytest

from iterpdd.fitting import estimate_kappa, fit_all_nodes
from iterpdd.geometry import build_partition
from iterpdd.problems import manufactured_problem

FIT_SEED = 1


@pytest.fixture(scope="session")
def problem():
    return manufactured_problem()


@pytest.fixture(scope="session")
def partition(problem):
    return build_partition(problem.domain, 4, 6)


@pytest.fixture(scope="session")
def fitted(problem, partition):
    """Constants and auxiliary gradient table from the default fit (M=100, N=1000)."""
    constants, table, timings = fit_all_nodes(partition, problem, seed=FIT_SEED)
    return constants, table, timings


@pytest.fixture(scope="session")
def kappa(problem, partition, fitted):
    return estimate_kappa(problem, fitted[1], x0=partition.nodes[0].xy, seed=FIT_SEED).kappa


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
