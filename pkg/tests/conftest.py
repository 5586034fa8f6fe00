from fractions import Fraction

import pytest

from inlslab.ground_state import ground_state
from inlslab.radial import RadialGrid

QUARTER = Fraction(1, 4)


@pytest.fixture(scope="session")
def profile_quarter():
    return ground_state(QUARTER)


@pytest.fixture(scope="session")
def profile_zero():
    return ground_state(Fraction(0))


@pytest.fixture
def dyn_grid():
    return RadialGrid(64.0, 8191, QUARTER)


@pytest.fixture
def small_grid():
    return RadialGrid(16.0, 1023, QUARTER)


# -- acceptance summary: one line per criterion at the end of the run --------

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """criterion(number, title, passed, detail) records and prints a result line."""
    lines = request.config.stash[_LINES_KEY]

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(line)
