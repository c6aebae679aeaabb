import sys

import pytest

from stopeq import DiscountCurve, StoppingProblem, build_finite_chain
from stopeq.realopt import RealOptionParams

TWO_STATE = [[0.5, 0.5], [0.0, 1.0]]
# delta(1) = 3/4 with a tail ratio of 1/4: decays faster than log-subadditivity allows
FAST_DECAY = [1.0, 0.75, 0.1875]


@pytest.fixture
def two_state_chain():
    return build_finite_chain([1, 2], TWO_STATE)


@pytest.fixture
def no_equilibrium_problem(two_state_chain):
    return StoppingProblem(two_state_chain, [1.0, 2.0], DiscountCurve.table(FAST_DECAY))


@pytest.fixture
def two_equilibria_problem(two_state_chain):
    # delta(t) = (7/12) (1 - eps)^t for t >= 1, eps = 0.01
    return StoppingProblem(two_state_chain, [1.0, 2.0],
                           DiscountCurve.quasi_hyperbolic(7 / 12, 0.99))


@pytest.fixture
def put_params():
    return RealOptionParams(u=1.3, p=0.5, beta=0.2, K=1.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)
