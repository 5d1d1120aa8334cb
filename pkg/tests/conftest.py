import numpy as np
import pytest

from zop.problem import CompositeProblem, Regularizer, StochasticFunction

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def closed_form(fn, n, batch=None, G=1.0, reg=None, name="F"):
    """Deterministic CompositeProblem from a plain function of x."""
    f = StochasticFunction(n, 1, lambda x, xi: float(fn(np.asarray(x))), G,
                           eval_batch=batch, name=name)
    return CompositeProblem(f, reg or Regularizer.zero(), name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
