import numpy as np
import pytest

from nhimld.models import Barbanis2DoF, BarbanisContopoulos3DoF
from nhimld.periodic import ContinuationConfig, orbit_family

ACCEPTANCE_LINES: list[str] = []

FAMILY_EXCESS = [0.125 + 0.25 * k for k in range(10)]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model2():
    return Barbanis2DoF()


@pytest.fixture(scope="session")
def model3():
    return BarbanisContopoulos3DoF()


@pytest.fixture(scope="session")
def family(model2):
    ec = model2.critical_energy
    return orbit_family(model2, [ec + de for de in FAMILY_EXCESS])


@pytest.fixture(scope="session")
def po_1525(model2):
    return orbit_family(model2, [15.25])[0]


@pytest.fixture(scope="session")
def po_1525_top(model2):
    return orbit_family(model2, [15.25], ContinuationConfig(saddle="top"))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
