import numpy as np
import pytest

import fieldflow as ff


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def standard_cloud():
    return ff.standard_mixture_cloud()


@pytest.fixture(scope="session")
def probe_cloud():
    return ff.standard_probe_cloud(10)


@pytest.fixture(scope="session")
def two_point_cloud():
    return ff.DataCloud(np.array([[-1.0], [1.0]]))
