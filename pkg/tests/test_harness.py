import math

import numpy as np
import pytest

from conftest import thm3
from stochpath.environments import gen_random_proper
from stochpath.errors import BadConfig, DegenerateFit, StepCapExceeded
from stochpath.harness import (
    AlgoSpec,
    InvariantAudit,
    OptimismAudit,
    SweepResult,
    audit_run,
    fit_scaling,
    optimism_audit,
    run_experiment,
    sweep,
)
from stochpath.learners import StepRecord
from stochpath.mdp import solve_optimal
from stochpath.records import RegretTrace


def test_oracle_regret_is_zero_mean():
    mdp = thm3()
    sol = solve_optimal(mdp)
    finals = np.array([run_experiment(mdp, "oracle", 50, seed=s, solve=sol).final_regret
                       for s in range(100)])
    se = finals.std(ddof=1) / math.sqrt(len(finals))
    assert abs(finals.mean()) <= 4 * se


def test_trace_length_and_regret_identity():
    mdp = gen_random_proper(3, 2, 0.2, "mixed", seed=1)
    trace = run_experiment(mdp, "vi_sp", 10, seed=3)
    assert trace.K == 10 and [r.k for r in trace.records] == list(range(1, 11))
    expected = 10 * trace.v_init - trace.total_reward
    assert trace.final_regret == pytest.approx(expected, abs=1e-9)
    for k in (1, 5, 10):
        partial = math.fsum(r.episode_reward for r in trace.records[:k])
        assert trace.regret_at(k) == pytest.approx(k * trace.v_init - partial, abs=1e-9)


def test_same_seed_same_trace():
    mdp = gen_random_proper(3, 2, 0.2, "nonpos", seed=2)
    a = run_experiment(mdp, "vi_ssp", 30, seed=8)
    b = run_experiment(mdp, "vi_ssp", 30, seed=8)
    assert a == b
    assert a != run_experiment(mdp, "vi_ssp", 30, seed=9)


def test_trace_formats_round_trip(tmp_path):
    trace = run_experiment(thm3(), "vi_sp", 25, seed=4)
    assert RegretTrace.from_csv(trace.to_csv()) == trace
    assert RegretTrace.from_json(trace.to_json()) == trace
    trace.save(tmp_path / "t.csv")
    assert RegretTrace.from_csv((tmp_path / "t.csv").read_text()) == trace


def test_unknown_algorithm():
    with pytest.raises(BadConfig):
        AlgoSpec(name="q_learning")


def test_step_cap_propagates():
    with pytest.raises(StepCapExceeded):
        run_experiment(gen_random_proper(2, 2, 0.01, seed=0), "vi_sp", 100, step_cap=50)


def test_vi_slp_through_harness():
    mdp = gen_random_proper(2, 2, 0.5, "nonneg", seed=3)
    trace = run_experiment(mdp, dict(name="vi_slp", zeta=1.0, U=4.0, c_upper=0.25), 3000, seed=0)
    assert trace.K == 3000 and trace.algorithm == "vi_slp"
    assert trace.config["v_hat"] > 0


def test_fit_scaling_synthetic():
    Ks = [128, 256, 512, 1024, 2048]
    slope, _, resid = fit_scaling({K: 3 * math.sqrt(K) for K in Ks})
    assert slope == pytest.approx(0.5, abs=1e-12) and resid < 1e-12
    slope, intercept, _ = fit_scaling([(K, 7.0 * K) for K in Ks])
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert intercept == pytest.approx(math.log(7.0), abs=1e-12)


def test_fit_scaling_degenerate():
    with pytest.raises(DegenerateFit):
        fit_scaling({128: 1.0, 256: 2.0})
    with pytest.raises(DegenerateFit):
        fit_scaling({128: 1.0, 256: -2.0, 512: 3.0, 1024: 4.0})
    slope, _, _ = fit_scaling({128: 1.0, 256: -2.0, 512: 4.0, 1024: 8.0},
                              exclude_nonpositive=True)
    assert slope == pytest.approx(1.0)


def rec(s, a, q, t=1):
    return StepRecord(t, 1, s, a, 0.0, 0, 0.0, 0.0, 1.0, q)


def test_optimism_audit_records():
    sol = solve_optimal(thm3())
    B = sol.B_star
    # a learner that never moves off its B initialization is trivially optimistic
    never = [rec(s, a, B, t) for t, (s, a) in enumerate([(0, 0), (1, 1), (2, 0)], 1)]
    assert not optimism_audit(never, sol).violated
    low = [rec(0, 0, sol.q_star[0, 0] - 0.5)]
    report = optimism_audit(low, sol)
    assert report.violating_steps == 1 and report.worst_violation == pytest.approx(0.5)
    assert not optimism_audit(low, sol, tol=math.inf).violated


def test_optimism_audit_live_run():
    mdp = gen_random_proper(3, 2, 0.2, "mixed", seed=6)
    sol = solve_optimal(mdp)
    audit = OptimismAudit(sol.q_star, tol=math.inf)
    run_experiment(mdp, "vi_sp", 20, sink=audit, solve=sol)
    assert audit.report.steps > 0 and not audit.report.violated


def test_invariant_audit_clean_runs():
    for algo, mode in (("vi_sp", "mixed"), ("vi_ssp", "nonpos")):
        res = audit_run(gen_random_proper(3, 2, 0.2, mode, seed=1), algo, 40, seed=0)
        assert res.invariant_failures == []


def test_invariant_audit_catches_tampering():
    mdp = gen_random_proper(2, 2, 0.5, seed=0)
    inv = InvariantAudit()

    def hook(learner):
        inv.attach(learner)
        learner.Q[1, 1] = 100.0  # above B

    run_experiment(mdp, AlgoSpec("vi_sp", B=2.0), 5, sink=inv, learner_hook=hook)
    assert inv.failures


def test_sweep_ordering_and_workers(tmp_path):
    mdp = gen_random_proper(2, 2, 0.4, "mixed", seed=0)
    one = sweep(mdp, "vi_sp", [40, 20], range(3), workers=1)
    two = sweep(mdp, "vi_sp", [40, 20], range(3), workers=2)
    assert one.rows == two.rows
    assert [(K, s) for K, s, _, _ in one.rows] == [(K, s) for K in (20, 40) for s in range(3)]
    assert SweepResult.from_csv(one.to_csv()).rows == one.rows
    assert one.to_csv().startswith("K,seed,final_regret,total_steps\n")
