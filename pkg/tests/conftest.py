import math
from pathlib import Path

import numpy as np
import pytest

from gridfreq.netmodel import REFERENCE_PARAMS, RepresentativeParams, load_case, make_proportional_case, random_connected_lines

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion number, title, passed, detail) appended by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo or sweep test")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail}")


@pytest.fixture
def three_bus():
    return load_case(FIXTURES / "three_bus.json")


@pytest.fixture
def three_bus_homogeneous():
    return load_case(FIXTURES / "three_bus_homogeneous.json")


@pytest.fixture
def ten_bus():
    return load_case(FIXTURES / "ten_bus.json")


def two_bus_unit_case():
    """Homogeneous 2-bus swing network: m=1, d=0.5, no turbine droop."""
    rep = RepresentativeParams(m=1.0, d=0.5, tau=1.0, r_t=math.inf, r_r=2.0)
    return make_proportional_case(rep, [1.0, 1.0], [(1, 2, 1.0)])


def random_proportional_case(rng, n=None, rep=REFERENCE_PARAMS, homogeneous=False):
    n = int(rng.integers(2, 9)) if n is None else n
    f = np.ones(n) if homogeneous else rng.uniform(0.3, 3.0, n)
    return make_proportional_case(rep, f, random_connected_lines(n, rng))


def random_rep(rng):
    """Representative machine with parameters spread around the reference values."""
    s = lambda lo, hi: float(10 ** rng.uniform(np.log10(lo), np.log10(hi)))
    return RepresentativeParams(m=s(1e-3, 1.0), d=s(1e-4, 1e-1), tau=s(0.5, 10.0),
                                r_t=s(10.0, 1e4), r_r=s(10.0, 1e4))


def random_stable_tf(rng, order):
    """Stable strictly proper TF of the given order, coefficients log-uniform in [1e-3, 1e3]."""
    from gridfreq.lti import RationalTF, hurwitz

    while True:
        c = 10 ** rng.uniform(-3, 3, order)
        if hurwitz(np.concatenate([[1.0], c[::-1]])):
            break
    num = 10 ** rng.uniform(-3, 3, order) * rng.choice([-1.0, 1.0], order)
    a = [0.0] * (4 - order) + list(c)
    b = [0.0] * (4 - order) + list(num)
    return RationalTF(tuple(a), tuple(b))
