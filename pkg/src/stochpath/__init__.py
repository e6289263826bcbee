"""Regret-minimization laboratory for goal-terminated (stochastic path) MDPs."""
from .environments import (
    EnvInstance,
    Family,
    LowerBoundParams,
    RewardMode,
    env_step,
    gen_general_lb,
    gen_random_proper,
    gen_rstar_lb,
    gen_slp_lb,
    generate,
)
from .harness import AlgoSpec, audit_run, fit_scaling, optimism_audit, run_experiment, sweep
from .learners import LearnerConfig, Mode, bonus, iota, new_learner
from .mdp import (
    Policy,
    SolveResult,
    TabularSP,
    add_virtual_init,
    evaluate_policy,
    hitting_time,
    max_expected_time,
    perturb_rewards,
    policy_sweep_stats,
    second_moment,
    solve_optimal,
    validate,
)
from .records import RegretTrace
from .slp import EstimatorConfig, estimate_vstar, preset_zeta, tilde_iota, vislp_run

__version__ = "0.1.0"
