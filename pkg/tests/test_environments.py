import math

import numpy as np
import pytest

from stochpath.environments import (
    EnvInstance,
    LowerBoundParams,
    build_env_mdp,
    env_step,
    gen_random_proper,
    gen_rstar_lb,
    gen_slp_lb,
    slp_lb_probs,
)
from stochpath.errors import BadParams, EpisodeNotStarted, StepCapExceeded
from stochpath.mdp import TabularSP, solve_optimal, validate


def slp(**kw):
    base = dict(family="slp_lb", A=2, v=4.0, c=1.0, K=10_000)
    base.update(kw)
    return gen_slp_lb(LowerBoundParams(**base))


def test_general_lb_closed_forms():
    eps, dlt = 0.1, 0.05
    sol = solve_optimal(build_env_mdp(dict(family="general_lb", epsilon=eps, Delta=dlt,
                                           good_action=0)))
    c = dlt / eps / (2 - dlt)
    assert sol.v_star[0] == pytest.approx(1 + c * (1 + eps), abs=1e-8)
    assert sol.v_star[1] == pytest.approx(-1 + c * (1 - eps), abs=1e-8)
    assert sol.q_star[0, 1] == pytest.approx(1 + c * (1 - eps), abs=1e-8)


def test_general_lb_without_good_action_is_symmetric():
    sol = solve_optimal(build_env_mdp(dict(family="general_lb", epsilon=0.2, Delta=0.1)))
    assert sol.v_star[0] == pytest.approx(1.0, abs=1e-10)
    assert sol.v_star[1] == pytest.approx(-1.0, abs=1e-10)
    assert sol.v_init == pytest.approx(0.0, abs=1e-10)


def test_general_lb_rejects_large_params():
    with pytest.raises(BadParams):
        build_env_mdp(dict(family="general_lb", epsilon=0.3, Delta=0.1))


def test_rstar_rejects_out_of_range():
    with pytest.raises(BadParams):
        gen_rstar_lb(LowerBoundParams("rstar_lb", epsilon=0.04, Delta=0.2, good_action=0))
    with pytest.raises(BadParams):  # good action may not be the exit action
        gen_rstar_lb(LowerBoundParams("rstar_lb", A=2, epsilon=0.1, Delta=0.1, good_action=1))


def test_rstar_exit_and_structure():
    mdp = gen_rstar_lb(LowerBoundParams("rstar_lb", A=3, epsilon=0.1, Delta=0.1, good_action=0))
    assert validate(mdp).all_proper
    assert mdp.transition[0, 2, mdp.goal] == 1.0 and mdp.reward[0, 2] == 1.0
    # tilts: good action towards x, other mixing action towards y
    assert mdp.transition[0, 0, 0] > mdp.transition[0, 0, 1]
    assert mdp.transition[0, 1, 0] < mdp.transition[0, 1, 1]
    sol = solve_optimal(mdp)
    assert sol.v_star[0] >= 1.0 - 1e-12


def test_rstar_tree_copies():
    mdp = gen_rstar_lb(LowerBoundParams("rstar_lb", A=2, epsilon=0.1, Delta=0.1,
                                        good_action=0, copies=3, good_copy=2))
    assert mdp.num_states == 6 and mdp.num_actions == 4
    assert mdp.transition[0, 2, 2] == 1.0 and mdp.transition[0, 3, 4] == 1.0
    assert mdp.transition[2, 2, mdp.goal] == 1.0  # missing child
    assert validate(mdp).all_proper
    sol = solve_optimal(mdp)
    # only copy 2 is tilted towards x, so it has the highest x-value
    assert sol.v_star[4] > sol.v_star[2]


def test_slp_lb_closed_forms():
    v, c, K, A = 4.0, 1.0, 10_000, 2
    sol = solve_optimal(slp(good_action=0))
    assert sol.v_star[0] == pytest.approx(1 + 2 * v, abs=1e-8)
    expected_B = 2 * c * v * math.log(v * K) ** 2 * math.sqrt(K / A)
    assert sol.B_star == pytest.approx(expected_B, rel=1e-8)
    p_b, q = slp_lb_probs(v, c, K, A)
    assert q == pytest.approx(p_b / (2 * v))


def test_slp_lb_without_good_action():
    sol = solve_optimal(slp())
    np.testing.assert_allclose(sol.v_star[:2], [4.0, 2.0], atol=1e-10)
    assert sol.B_star == pytest.approx(4.0)


def test_slp_lb_probability_range():
    with pytest.raises(BadParams):
        slp(c=1e-6)


def test_slp_lb_tree():
    mdp = slp(copies=4, good_action=1, good_copy=3)
    assert mdp.num_states == 8  # x plus 7 tree nodes
    assert (mdp.reward >= 0).all() and validate(mdp).all_proper
    assert mdp.reward[1, 0] == 0.0 and mdp.transition[1, 1, 3] == 1.0


@pytest.mark.parametrize("mode,lo,hi", [("mixed", -1, 1), ("nonneg", 0, 1), ("nonpos", -1, 0)])
def test_random_proper(mode, lo, hi):
    mdp = gen_random_proper(4, 3, 0.2, mode, seed=5)
    assert validate(mdp).ok
    assert (mdp.reward >= lo).all() and (mdp.reward <= hi).all()
    np.testing.assert_allclose(mdp.transition[:, :, -1], 0.2)
    again = gen_random_proper(4, 3, 0.2, mode, seed=5)
    assert np.array_equal(mdp.transition, again.transition)


def test_random_proper_one_step_episodes():
    env = EnvInstance(gen_random_proper(3, 2, 1.0, seed=1), seed=0)
    for _ in range(20):
        env.reset()
        assert env.step(0)[1] == 3


def test_sampling_frequencies():
    p = np.array([0.1, 0.25, 0.05, 0.6])  # three states plus goal
    P = np.tile(p, (3, 1, 1))
    env = EnvInstance(TabularSP(np.zeros((3, 1)), P), seed=123)
    n = 1_000_000
    counts = np.zeros(4)
    env.reset()
    for _ in range(n):
        _, o = env.step(0)
        counts[o] += 1
        if o == 3:
            env.reset()
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 4 * sigma)


def test_zero_probability_outcomes_never_drawn():
    P = np.array([[[0.0, 0.3, 0.0, 0.7]], [[0.0, 0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0, 0.0]]])
    env = EnvInstance(TabularSP(np.zeros((3, 1)), P), seed=0)
    env.reset()
    for _ in range(20_000):
        _, o = env.step(0)
        assert o in (1, 3)
        if o == 3:
            env.reset()
        else:
            env.current_state = 0


def test_deterministic_exit_step():
    env = EnvInstance(build_env_mdp(dict(family="random", S=1, A=1, p_goal_min=1.0)), seed=0)
    env.reset()
    r, o = env_step(env, 0)
    assert o == 1 and env.episode_count == 1 and not env.in_episode


def test_step_protocol_errors():
    env = EnvInstance(gen_random_proper(2, 2, 0.01, seed=0), seed=0, step_cap=5)
    with pytest.raises(EpisodeNotStarted):
        env.step(0)
    env.reset()
    with pytest.raises(StepCapExceeded):
        for _ in range(100):
            _, o = env.step(0)
            if o == 2:
                env.reset()
    assert env.step_count == 5


def test_geometric_episode_lengths():
    env = EnvInstance(TabularSP(np.ones((1, 1)), np.array([[[0.75, 0.25]]])), seed=7)
    n = 100_000
    lengths = np.empty(n)
    for i in range(n):
        env.reset()
        k = 1
        while env.step(0)[1] != 1:
            k += 1
        lengths[i] = k
    se = lengths.std(ddof=1) / math.sqrt(n)
    assert abs(lengths.mean() - 4.0) <= 4 * se


def test_seeded_streams_reproduce():
    mdp = gen_random_proper(3, 2, 0.1, seed=2)

    def draws(seed):
        env = EnvInstance(mdp, seed=seed)
        out = []
        env.reset()
        for _ in range(5000):
            _, o = env.step(1)
            out.append(o)
            if o == 3:
                env.reset()
        return out

    assert draws(4) == draws(4)
    assert draws(4) != draws(5)
