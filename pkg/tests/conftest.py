import numpy as np
import pytest

from uqf.pomdp import Pomdp, StatePolicy


def make_chain(gamma=0.5):
    """Two states; action 0 stays, action 1 swaps; one observation.

    State 1 pays 1 under either action, state 0 pays nothing.
    """
    T = np.zeros((2, 2, 2))
    T[:, 0, :] = np.eye(2)
    T[:, 1, :] = [[0.0, 1.0], [1.0, 0.0]]
    Z = np.ones((2, 2, 1))
    R = np.array([[0.0, 0.0], [1.0, 1.0]])
    return Pomdp(T=T, Z=Z, R=R, mu=[1.0, 0.0], gamma=gamma)


@pytest.fixture
def chain():
    return make_chain()


@pytest.fixture
def uniform_chain_policy():
    return StatePolicy.uniform(2, 2)


def all_words(num_actions, num_obs, max_len):
    import itertools

    symbols = [(a, o) for a in range(num_actions) for o in range(num_obs)]
    out = [()]
    for n in range(1, max_len + 1):
        out.extend(itertools.product(symbols, repeat=n))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
