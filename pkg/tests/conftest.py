import numpy as np
import pytest

from casualcubic import LogisticProblem, gen_separable_logistic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def separable_logistic():
    ds = gen_separable_logistic(200, 10, margin=0.1, seed=0)
    return ds, LogisticProblem.from_dataset(ds, 0.0)


def random_psd(rng, d, scale=1.0):
    G = rng.standard_normal((d, d))
    return scale * G @ G.T / d


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
