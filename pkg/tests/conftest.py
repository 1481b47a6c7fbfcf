import pytest

from densym.model import build_transformed, heston
from densym.speed import SpeedDensity

DESK = dict(a=0.1, b=0.5, sigma=0.3, lam=-0.5)

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def desk():
    return heston(**DESK)


@pytest.fixture(scope="session")
def desk_t(desk):
    return build_transformed(desk)


@pytest.fixture(scope="session")
def desk_sd(desk):
    return SpeedDensity(desk)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
