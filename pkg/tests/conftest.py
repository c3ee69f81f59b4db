import numpy as np
import pytest

from subflow.domain import build_chart
from subflow.flow import initial_map
from subflow.stability import random_section
from subflow.target import Target

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def twisted16():
    return build_chart("twisted-torus", (16, 16, 16))


@pytest.fixture(scope="session")
def twisted8():
    return build_chart("twisted-torus", (8, 8, 8))


@pytest.fixture(scope="session")
def weighted16():
    return build_chart("weighted-torus", (16, 16, 16))


@pytest.fixture(scope="session")
def s2():
    return Target("sphere", 2)


@pytest.fixture(scope="session")
def s3():
    return Target("sphere", 3)


@pytest.fixture
def random_pair(twisted16, s2):
    f = initial_map("random-smooth", twisted16, s2, seed=3)
    V = random_section(f, np.random.default_rng(4))
    return f, V


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES
