import numpy as np
import pytest

from adiabatic_lab.operators import build_constant, build_rank_one_grid, build_rotating_two_level

# (criterion, verdict, detail) lines recorded by the acceptance module
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def rotating():
    return build_rotating_two_level()


@pytest.fixture(scope="session")
def rank_one():
    return build_rank_one_grid()


@pytest.fixture(scope="session")
def commuting_constant():
    h0 = np.diag([0.0, 1.0, 3.0])
    h1 = np.diag([0.2, -0.1, 0.4])
    return build_constant(h0, h1)


@pytest.fixture(scope="session")
def block_constant():
    # H1 couples only inside ran Q0, so it commutes with P0 but not with H0
    h0 = np.diag([0.0, 2.0, 3.0])
    h1 = np.array([[0.1, 0, 0], [0, 0.2, 0.3], [0, 0.3, -0.1]])
    return build_constant(h0, h1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
