import numpy as np
import pytest

from forest_renewal import ModelParams, RateSpec


def e1_params(mu=1.0):
    # beta(x) = 2x, g(x) = e^{-x}
    return ModelParams(mu, 0.0, 0.5, RateSpec.affine(0.0, 2.0), RateSpec.exp_decay(1.0, 1.0))


def ramp_params(c=1.0, x_A=1.0):
    return ModelParams(1.0, 0.0, 0.5, RateSpec.ramp(c, x_A), RateSpec.exp_decay(1.0, 1.0))


def unbounded_params():
    # beta(x) = 1 + x, so beta(x_m) = mu
    return ModelParams(1.0, 0.0, 0.5, RateSpec.affine(1.0, 1.0), RateSpec.exp_decay(1.0, 1.0))


def e1_b_star():
    """Closed form for E1: R(b) = 2 (1 - e^{-b}) / b, so b* solves 2 (1 - e^{-b}) = b."""
    from scipy.optimize import brentq
    return brentq(lambda b: 2 * (1 - np.exp(-b)) - b, 0.5, 3.0, xtol=1e-15)


@pytest.fixture
def e1():
    return e1_params()


@pytest.fixture
def ramp():
    return ramp_params()


@pytest.fixture
def unbounded():
    return unbounded_params()


@pytest.fixture(scope="session")
def b_star_e1():
    return e1_b_star()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
