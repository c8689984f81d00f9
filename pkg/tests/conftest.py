import numpy as np
import pytest

from nondoubling.kernels import KernelProfile
from nondoubling.lattice import build_lattice
from nondoubling.measure import generate


@pytest.fixture(scope="session")
def interval():
    return generate("lebesgue_interval", res=512)


@pytest.fixture(scope="session")
def saksman():
    return generate("saksman_intervals", K=6)


@pytest.fixture(scope="session")
def square():
    return generate("lebesgue_square", res=20)


@pytest.fixture(scope="session")
def cluster():
    return generate("log_cluster", rho=0.97, levels=1200)


@pytest.fixture(scope="session")
def cluster_profile(cluster):
    return KernelProfile(build_lattice(cluster, 40.0))


@pytest.fixture(scope="session")
def saksman_profile(saksman):
    return KernelProfile(build_lattice(saksman, 40.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
