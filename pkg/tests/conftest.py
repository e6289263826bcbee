import numpy as np
import pytest

from stochpath.environments import LowerBoundParams, gen_general_lb
from stochpath.mdp import TabularSP

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def one_state(r: float = 0.5, p_goal: float = 1.0, actions: int = 1) -> TabularSP:
    reward = np.full((1, actions), r)
    P = np.zeros((1, actions, 2))
    P[0, :, 0] = 1 - p_goal
    P[0, :, 1] = p_goal
    return TabularSP(reward, P, 0)


def self_loop() -> TabularSP:
    """State 0 has an action that never leaves it."""
    P = np.zeros((2, 2, 3))
    P[0, 0, 0] = 1.0
    P[0, 1, 2] = 1.0
    P[1, :, 2] = 1.0
    return TabularSP(np.zeros((2, 2)), P, 1)


def thm3(eps=0.1, delta=0.05, good=0, copies=1) -> TabularSP:
    return gen_general_lb(LowerBoundParams("general_lb", A=2, epsilon=eps, Delta=delta,
                                           good_action=good, copies=copies))


@pytest.fixture
def geometric():
    return one_state(r=1.0, p_goal=0.25)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")
