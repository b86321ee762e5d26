import functools

import numpy as np
import pytest

from memkernel.bath import BathStatistics, bath_influence, ohmic
from memkernel.system import bare_full_step, bare_half_step, liouvillian_step, spin_boson

PARAM_SETS = {"weak": (0.1, 1.0), "intermediate": (0.5, 1.0), "subohmic": (0.5, 0.5)}
BETA, OMEGA_C = 5.0, 7.5


@functools.lru_cache(maxsize=None)
def ohmic_table(xi: float, s: float, dt: float, depth: int):
    return bath_influence(ohmic(xi, s, OMEGA_C), BathStatistics("boson", BETA), dt, depth)


@functools.lru_cache(maxsize=None)
def spin_boson_ops(dt: float, epsilon: float = 0.0, delta: float = 1.0):
    sysm = spin_boson(epsilon, delta)
    G = bare_half_step(sysm, dt)
    return sysm, G, bare_full_step(G), liouvillian_step(sysm, dt)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
