import numpy as np
import pytest

from copercept.experiments import build_scene
from copercept.scenario import default_fleet


@pytest.fixture(scope="session")
def fleet():
    return default_fleet()


@pytest.fixture(scope="session")
def scene():
    return build_scene(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
