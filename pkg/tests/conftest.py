import math

import numpy as np
import pytest

from fracperiod.torus import ModeLattice, TorusConfig

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def cfg_a():
    """Reference fixture: N=2, T=2pi, m=1, s=1/2, lambda_inf=2."""
    return TorusConfig(2 * math.pi, 2, 1.0, 0.5, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cube(cfg, M):
    return ModeLattice.cube(cfg.N, M, cfg.T)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
