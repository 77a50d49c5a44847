import numpy as np
import pytest

import vrsgd
from vrsgd import harness


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("refcache"))


@pytest.fixture(scope="session")
def small_problem():
    """50x20 unit-row instance, lam = 1/n."""
    ds = vrsgd.normalize_rows(vrsgd.generate_synthetic(50, 20, 4, seed=3, flip=0.1))
    return vrsgd.Problem(ds, lam=1.0 / 50)


@pytest.fixture(scope="session")
def small_reference(small_problem, cache_dir):
    return harness.reference_optimum(small_problem, tol=1e-12, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def medium_problem():
    """200-example instance used by the longer solver checks."""
    ds = vrsgd.normalize_rows(vrsgd.generate_synthetic(200, 30, 5, seed=11, flip=0.1))
    return vrsgd.Problem(ds, lam=1.0 / 200)


@pytest.fixture(scope="session")
def medium_reference(medium_problem, cache_dir):
    return harness.reference_optimum(medium_problem, tol=1e-12, cache_dir=cache_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
