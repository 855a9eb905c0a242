import os

import numpy as np
import pytest

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240915))


def data_path(name):
    return os.path.join(DATA, name)
