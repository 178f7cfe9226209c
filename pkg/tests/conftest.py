import numpy as np
import pytest
from hypothesis import settings

from ndmud.channel import NetworkConfig
from ndmud.signatures import paper_signatures

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sig7():
    return paper_signatures()


@pytest.fixture(scope="session")
def cfg100():
    return NetworkConfig.paper_default(N=100)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
