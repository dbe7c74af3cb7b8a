import numpy as np
import pytest

from cssc.dataset import generate_union_of_subspaces


@pytest.fixture(scope="session")
def noiseless():
    """Three independent 3-dim subspaces of R^30, 20 points each."""
    return generate_union_of_subspaces(30, 3, 3, 20, 0.0, seed=7)


@pytest.fixture(scope="session")
def noisy():
    """Desk-scale benchmark: four 4-dim subspaces of R^50, 25 points each, noise 0.05."""
    return generate_union_of_subspaces(50, 4, 4, 25, 0.05, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
