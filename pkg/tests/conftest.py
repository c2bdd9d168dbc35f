import sys

import numpy as np
import pytest

from ripost import CountTensor

FIG2_CELLS = [0, 0, 7, 0, 0, 12, 0, 0, 5, 0, 1]


def sparse_fixture() -> CountTensor:
    """32x32 tensor, ~83% empty: four Poisson clusters of low counts."""
    gen = np.random.default_rng(12345)
    cells = np.zeros((32, 32), dtype=np.int64)
    clusters = [((2, 3, 6, 5), 3), ((15, 18, 8, 9), 5), ((24, 2, 5, 12), 2), ((5, 24, 4, 4), 8)]
    for (r0, c0, h, w), lam in clusters:
        cells[r0 : r0 + h, c0 : c0 + w] = gen.poisson(lam, (h, w))
    return CountTensor.from_cells(cells)


@pytest.fixture
def fig2():
    return CountTensor.from_cells(FIG2_CELLS, names=["Service"])


@pytest.fixture(scope="session")
def sparse():
    return sparse_fixture()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
