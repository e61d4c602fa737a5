import numpy as np
import pytest

from lgcert.geometry import GridSpec, diamond_domain, rasterize, unit_square
from lgcert.solvers import chord_oracle
from lgcert.bv import g_n_profile


@pytest.fixture(scope="session")
def diamond():
    return diamond_domain()


@pytest.fixture(scope="session")
def square():
    return unit_square()


def make_mask(d, h, margin=4):
    g = GridSpec.covering(d, h, margin=margin)
    return rasterize(d, g)


@pytest.fixture(scope="session")
def g3_oracle_128(diamond):
    g = GridSpec.covering(diamond, 1 / 128, margin=4)
    return chord_oracle(g_n_profile(3), (1.0, 0.0), diamond, g, cap=20.0)


@pytest.fixture(scope="session")
def g3_oracle_256(diamond):
    g = GridSpec.covering(diamond, 1 / 256, margin=4)
    return chord_oracle(g_n_profile(3), (1.0, 0.0), diamond, g, cap=1e6)


# one summary line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
