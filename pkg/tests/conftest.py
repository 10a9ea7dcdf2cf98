import numpy as np
import pytest

from feedback_lab.channel import make_bsc


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def bsc02():
    return make_bsc(0.02)


@pytest.fixture
def bsc01():
    return make_bsc(0.1)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
