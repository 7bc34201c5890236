import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lowswitch.mdp import RngStream, TabularMdp, make_chain_mdp, make_random_mdp  # noqa: E402


def single_state(r=1.0, gamma=0.9, n_actions=1):
    return TabularMdp(1, n_actions, gamma, np.ones((1, n_actions, 1)), np.full((1, n_actions), r))


@pytest.fixture
def chain2():
    return make_chain_mdp(2, 0.0, 0.5)


@pytest.fixture
def chain6():
    return make_chain_mdp(6, 0.3, 0.95)


@pytest.fixture
def random53():
    return make_random_mdp(5, 3, 0.9, 1.0, RngStream(0))


# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
