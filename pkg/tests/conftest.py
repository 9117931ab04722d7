import os

import numpy as np
import pytest
import yaml

from cube_family import build_family
from example_measures import cantor4, eps_weighted, random_cloud, segment, square
from measure_core import AnalysisContext, DiscreteMeasure
from parallel_sweeps import set_threads

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def calibration():
    with open(os.path.join(FIXTURES, "calibration.yaml"), "r") as file:
        return yaml.safe_load(file)


@pytest.fixture(autouse=True)
def single_thread():
    set_threads(1)
    yield
    set_threads(1)


@pytest.fixture(scope="session")
def line_pair():
    """Unit masses at 0 and 1 on the line."""
    return DiscreteMeasure([[0.0], [1.0]], [1.0, 1.0], 0.5)


@pytest.fixture(scope="session")
def small_segment():
    return segment(65)


@pytest.fixture(scope="session")
def small_square():
    return square(12)


@pytest.fixture(scope="session")
def small_cantor():
    return cantor4(3)


@pytest.fixture(scope="session")
def cloud():
    return random_cloud(60, d=2, seed=1)


@pytest.fixture(scope="session")
def cloud_ctx(cloud):
    return AnalysisContext.build(cloud)


@pytest.fixture(scope="session")
def cloud_family(cloud, cloud_ctx):
    return build_family(cloud, cloud_ctx, max_centers=20, shifts=1, seed=2)


@pytest.fixture(scope="session")
def eps_measure():
    return eps_weighted(0.25, 0.5)


def random_measures(count: int, seed: int = 0):
    """Seeded random clouds of varying size and dimension."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        d = int(rng.integers(1, 3))
        yield random_cloud(int(rng.integers(8, 40)), d=d, seed=int(rng.integers(1 << 30)))
