import numpy as np
import pytest
from hypothesis import settings

from evospec import INFINITE, reference_network

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

REF_THETA = np.array([2 / 3, 4 / 7, 5 / 9, 1 / 2, 4 / 5])
REF_RATES = np.array([15.0, 70.0, 90.0, 20.0, 100.0])
REF_WEIGHTS = REF_THETA * REF_RATES  # 10, 40, 50, 10, 80


@pytest.fixture
def net_inf():
    return reference_network(100, INFINITE)


@pytest.fixture
def net_20():
    return reference_network(200, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    lines = test_acceptance.REPORT
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines, key=lambda k: (int(k.rstrip("abcd")), k)):
        terminalreporter.write_line(lines[key])
