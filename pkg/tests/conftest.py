import numpy as np
import pytest
from hypothesis import settings

from pujoint.data import PUDataset
from pujoint.glm import LinearParams, sigmoid

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def make_pu(n=400, p=3, beta=None, gamma=None, seed=0):
    """Well-specified product-model sample with hidden labels."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = beta or LinearParams(0.5, np.linspace(1.0, -0.5, p))
    gamma = gamma or LinearParams(0.0, np.full(p, 0.4))
    y = sigmoid(beta.intercept + X @ beta.coefficients)
    e = sigmoid(gamma.intercept + X @ gamma.coefficients)
    Y = (rng.random(n) < y).astype(int)
    S = (Y == 1) & (rng.random(n) < e)
    return PUDataset(X, S.astype(int), Y)


@pytest.fixture
def small_pu():
    return make_pu()


# one verdict line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
