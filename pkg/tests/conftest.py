import numpy as np
import pytest

from freshsip.model_io import Hyperrectangle, Network
from freshsip.symbolic import SymbolicIntervalFV
from freshsip.testkit import identity_network


def make_interval(lower, lower_off, upper, upper_off, box):
    """Symbolic interval over the inputs only (no fresh variables)."""
    d = box.dim
    return SymbolicIntervalFV(
        np.atleast_2d(np.asarray(lower, float)), np.asarray(lower_off, float),
        np.atleast_2d(np.asarray(upper, float)), np.asarray(upper_off, float),
        np.zeros((0, d)), np.zeros(0), np.zeros((0, d)), np.zeros(0),
        np.zeros((0, 2)), box,
    )


@pytest.fixture
def unit_square():
    return Hyperrectangle([-1.0, -1.0], [1.0, 1.0])


@pytest.fixture
def fig1_pair(unit_square):
    """Neurons x5 in [0, x1/2 + x2/2 + 1] and x6 in [0, x1/2 - x2/2 + 1]."""
    return make_interval(
        [[0.0, 0.0], [0.0, 0.0]], [0.0, 0.0],
        [[0.5, 0.5], [0.5, -0.5]], [1.0, 1.0],
        unit_square,
    )


@pytest.fixture
def fig1_network():
    """x7 = relu(x1/2 + x2/2 + 1) + relu(x1/2 - x2/2 + 1) - 1/2."""
    return Network(
        [np.array([[0.5, 0.5], [0.5, -0.5]]), np.array([[1.0, 1.0]])],
        [np.array([1.0, 1.0]), np.array([-0.5])],
    )


@pytest.fixture
def ident1():
    return identity_network(1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
