import numpy as np
import pytest
from hypothesis import settings

from kidecomp.experiment import StatisticalExperiment

settings.register_profile("default", deadline=None, max_examples=30, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def commuting_pair():
    return StatisticalExperiment(2, ["a", "b"], [np.diag([0.5, 0.5]), np.diag([1 / 3, 2 / 3])])


@pytest.fixture
def pure_pair():
    return StatisticalExperiment(2, ["zero", "plus"], [np.diag([1.0, 0.0]), np.full((2, 2), 0.5)])


@pytest.fixture
def identical_pair():
    rho = np.diag([0.7, 0.3])
    return StatisticalExperiment(2, ["a", "b"], [rho, rho.copy()])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import ACCEPTANCE_LINES
    except ImportError:
        return
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
