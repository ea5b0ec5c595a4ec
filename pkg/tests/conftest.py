import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
import sys, os
sys.path.insert(0, os.path.dirname(__file__))
