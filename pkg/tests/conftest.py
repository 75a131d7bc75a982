import time

import numpy as np
import pytest

from magma import ConvexDomain
from magma.grid import get_grid

SUITE_BUDGET_S = 600.0
ACCEPTANCE = []
_START = time.perf_counter()


def record(criterion, passed, detail):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"ACCEPTANCE {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
    wall = time.perf_counter() - _START
    status = "PASS" if wall <= SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"suite wall time {wall:.1f} s (budget {SUITE_BUDGET_S:.0f} s): {status}")


def pytest_sessionfinish(session, exitstatus):
    if time.perf_counter() - _START > SUITE_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture(scope="session")
def interval():
    return ConvexDomain.interval()


@pytest.fixture(scope="session")
def disk():
    return ConvexDomain.ball(1.0)


@pytest.fixture(scope="session")
def ellipse():
    return ConvexDomain.ellipse(1.0, 0.5)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20261014)


@pytest.fixture
def grid_of():
    return get_grid
