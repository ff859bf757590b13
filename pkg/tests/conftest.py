import pytest

from qmem.model import DeviceParams
from qmem.overlap import Geometry, build_overlap_table


@pytest.fixture(scope="session")
def geom():
    return Geometry()


@pytest.fixture(scope="session")
def table(geom):
    return build_overlap_table(geom)


@pytest.fixture(scope="session")
def dev():
    return DeviceParams()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
