import sys

import numpy as np
import pytest

from tgmrf.lattice import build_grid_graph, build_lfdp_lattice


@pytest.fixture(scope="session")
def lfdp():
    return build_lfdp_lattice()


@pytest.fixture(scope="session")
def grid6():
    return build_grid_graph(6, 6, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.line(line)
