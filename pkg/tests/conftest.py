import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical suites taking tens of seconds or more")
    config.addinivalue_line("markers", "full_scale: opt-in full-size experiment (DPRL_FULL_SCALE=1)")
