import numpy as np
import pytest

from singularguard.fuzzy import load_engine
from singularguard.kinematics import KinematicModel


@pytest.fixture(scope="session")
def model():
    return KinematicModel()


@pytest.fixture(scope="session")
def engine():
    return load_engine()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
