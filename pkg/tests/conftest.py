import io

import numpy as np
import pytest

from crowdem.model import load_labels
from crowdem.synth import gen_instance
from tests.helpers import TOY_CSV


@pytest.fixture
def toy_labels():
    return load_labels(io.StringIO(TOY_CSV))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_instance():
    return gen_instance(8, 120, 3, 0.6, 0.9, 4, seed=11)


@pytest.fixture(scope="session")
def dense_instance():
    # Every worker labels every item.
    return gen_instance(8, 200, 2, 0.7, 0.9, 8, seed=3)


@pytest.fixture(scope="session")
def medium_instance():
    return gen_instance(10, 300, 3, 0.6, 0.9, 5, seed=0)
