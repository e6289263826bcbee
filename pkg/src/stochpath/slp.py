"""Scale adaptation for stochastic longest path (non-negative rewards).

:func:`estimate_vstar` runs a fresh fixed-B learner for each scale guess
``B = 2^i * zeta`` and returns twice the best phase-average reward.
:func:`vislp_run` spends the estimation episodes, then keeps learning with
``B = v_hat * zeta`` for the rest of the budget.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

from .errors import BadConfig, BadParams, BudgetExceeded
from .learners import LearnerConfig, new_learner
from .records import RegretTrace, play_episode


def tilde_iota(T: int, B: float, delta: float, SA: int) -> float:
    """(ln(SA/delta) + ln ln(B T)) * ln T, with both logs' arguments clamped at e."""
    inner = math.log(SA / delta) + math.log(math.log(max(math.e, B * T)))
    return inner * math.log(max(math.e, T))


def preset_zeta(K: int, S: int, A: int, U: float, variant: str = "S2") -> float:
    """zeta = sqrt(K / (S^p A ln U)) with p = 2 or 3, floored at 1."""
    power = {"S2": 2, "S3": 3}[variant]
    return max(1.0, math.sqrt(K / (S**power * A * math.log(U))))


def preset_U_unknown(K: int, eps: float) -> float:
    """Range guess U = K^(1/eps) for when no bound on V* is available."""
    if not 0 < eps < 1:
        raise BadConfig("eps must lie in (0, 1)")
    return float(K) ** (1.0 / eps)


@dataclass(frozen=True)
class EstimatorConfig:
    zeta: float
    U: float
    delta: float = 0.1
    c_upper: float = 1.0
    c1: float = 2.0
    c2: float = 8.0

    def check(self) -> None:
        if self.zeta < 1:
            raise BadConfig(f"zeta must be >= 1, got {self.zeta}")
        if self.U <= 1:
            raise BadConfig(f"U must be > 1, got {self.U}")
        if self.c_upper <= 0:
            raise BadConfig("c_upper must be positive")

    @property
    def num_phases(self) -> int:
        return max(1, math.ceil(math.log2(self.U)))

    @property
    def phase_delta(self) -> float:
        return self.delta / self.num_phases

    def learner_config(self, B: float) -> LearnerConfig:
        return LearnerConfig(B_init=B, delta=self.phase_delta, c1=self.c1, c2=self.c2)

    def stop_threshold(self, S: int, A: int, M: int, B: float) -> float:
        return 16 * self.c_upper**2 * self.zeta * S**2 * A * tilde_iota(M, B, self.phase_delta, S * A)

    def min_episodes(self, S: int, A: int) -> int:
        """Lower bound on the episodes all phases need (tilde_iota >= ln(SA/delta'))."""
        per_phase = 16 * self.c_upper**2 * self.zeta * S**2 * A * math.log(S * A / self.phase_delta)
        return self.num_phases * math.ceil(per_phase)


@dataclass
class PhaseLog:
    i: int
    B: float
    N: int
    M: int
    r_hat: float
    delta: float


@dataclass
class EstimatorResult:
    v_hat: float
    r_hat: list[float]
    episodes_used: int
    steps_used: int
    phases: list[PhaseLog] = field(default_factory=list)

    def phase_log_json(self) -> str:
        return json.dumps({"phases": [asdict(p) for p in self.phases], "v_hat": self.v_hat})


EpisodeHook = Callable[[float, int, float], None]


def estimate_vstar(env, cfg: EstimatorConfig, episode_budget: int | None = None,
                   step_budget: int | None = None,
                   on_episode: EpisodeHook | None = None) -> EstimatorResult:
    """Coarse estimate of V* for an SLP; ``on_episode(reward, steps, B)`` sees every episode."""
    cfg.check()
    mdp = env.mdp
    if not mdp.is_slp:
        raise BadParams("the V* estimator needs non-negative rewards")
    S, A = mdp.num_states, mdp.num_actions
    episodes = steps = 0
    phases = []
    for i in range(1, cfg.num_phases + 1):
        B = 2.0**i * cfg.zeta
        learner = new_learner(S, A, cfg.learner_config(B), init_state=mdp.init_state)
        N = M = 0
        total = 0.0
        while True:
            if episode_budget is not None and episodes >= episode_budget:
                raise BudgetExceeded(f"episode budget {episode_budget} exhausted in phase {i}")
            if step_budget is not None and steps >= step_budget:
                raise BudgetExceeded(f"step budget {step_budget} exhausted in phase {i}")
            reward, n_steps = play_episode(env, learner)
            episodes += 1
            steps += n_steps
            N += 1
            M += n_steps
            total += reward
            if on_episode is not None:
                on_episode(reward, n_steps, B)
            if N >= cfg.stop_threshold(S, A, M, B):
                break
        phases.append(PhaseLog(i, B, N, M, total / N, cfg.phase_delta))
    r_hat = [p.r_hat for p in phases]
    return EstimatorResult(2.0 * max(r_hat), r_hat, episodes, steps, phases)


def vislp_run(env, K: int, cfg: EstimatorConfig, v_init: float, seed: int = 0,
              B_star: float = math.nan) -> RegretTrace:
    """K episodes of the scale-adaptive SLP learner, estimation episodes included.

    If ``K`` cannot cover even the minimum estimation cost, the run plays
    plain fixed-B learning with ``B = zeta`` and is flagged
    ``fallback_plain_vi_sp``.
    """
    cfg.check()
    mdp = env.mdp
    S, A = mdp.num_states, mdp.num_actions
    trace = RegretTrace(v_init=v_init, B_star=B_star, seed=seed, algorithm="vi_slp",
                        config=asdict(cfg))
    if K < cfg.min_episodes(S, A):
        trace.flags.append("fallback_plain_vi_sp")
        B = cfg.zeta
    else:
        try:
            est = estimate_vstar(env, cfg, episode_budget=K,
                                 on_episode=lambda r, n, B: trace.add(r, n, B))
        except BudgetExceeded:
            # all K episodes went to estimation
            trace.flags.append("estimation_incomplete")
            return trace
        trace.config["v_hat"] = est.v_hat
        trace.config["phases"] = [asdict(p) for p in est.phases]
        B = max(1.0, est.v_hat * cfg.zeta)
    learner = new_learner(S, A, LearnerConfig(B_init=B, delta=cfg.delta, c1=cfg.c1, c2=cfg.c2),
                          init_state=mdp.init_state)
    while trace.K < K:
        reward, n_steps = play_episode(env, learner)
        trace.add(reward, n_steps, B)
    return trace
