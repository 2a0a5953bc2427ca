import math

import numpy as np
import pytest

from sawtooth_sync.model import PhysicalParams

T_M = 1e-8
K = 10000
K0 = 500


def table_one_draw(rng, phi_M=0.0, fd_min_abs=0.0):
    """Physical parameters drawn from the default randomization ranges."""
    while True:
        fd = rng.uniform(-200, 200)
        if abs(fd) >= fd_min_abs:
            break
    return PhysicalParams.symmetric(rng.uniform(1, 3), T_M, fd,
                                    rng.uniform(0, 2 * math.pi), K, K0, phi_M=phi_M)


@pytest.fixture
def example_params():
    # f_d = 100 Hz, rho = 2 m, phi_S = pi
    return PhysicalParams.symmetric(2.0, T_M, 100.0, math.pi, K, K0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# pass/fail lines collected by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
