"""Tabular stochastic-path MDPs and their exact solvers.

A :class:`TabularSP` has ``S`` non-terminal states and ``A`` actions.  The
transition tensor has shape ``(S, A, S + 1)``; the last outcome index ``S``
is the terminal (goal) state, which has no outgoing row and value 0.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadDistribution,
    EnumLimitExceeded,
    NoConvergence,
    NotProper,
    SingularSystem,
)

SIMPLEX_TOL = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10**6


def _frozen(a, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TabularSP:
    reward: np.ndarray
    transition: np.ndarray
    init_state: int = 0

    def __post_init__(self):
        reward = _frozen(self.reward)
        transition = _frozen(self.transition)
        if reward.ndim != 2:
            raise ValueError(f"reward must be S x A, got shape {reward.shape}")
        S, A = reward.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        if transition.shape != (S, A, S + 1):
            raise ValueError(
                f"transition must have shape {(S, A, S + 1)}, got {transition.shape}"
            )
        if not 0 <= int(self.init_state) < S:
            raise ValueError(f"init_state {self.init_state} out of range [0, {S})")
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "init_state", int(self.init_state))

    @property
    def num_states(self) -> int:
        return self.reward.shape[0]

    @property
    def num_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def goal(self) -> int:
        """Outcome index of the terminal state."""
        return self.num_states

    @property
    def is_slp(self) -> bool:
        return bool(np.all(self.reward >= 0))

    @property
    def is_ssp(self) -> bool:
        return bool(np.all(self.reward <= 0))

    def with_init(self, init_state: int) -> "TabularSP":
        return TabularSP(self.reward, self.transition, init_state)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "S": self.num_states,
            "A": self.num_actions,
            "init": self.init_state,
            "reward": self.reward.tolist(),
            "transition": self.transition.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSP":
        mdp = cls(np.asarray(d["reward"], dtype=float),
                  np.asarray(d["transition"], dtype=float),
                  int(d["init"]))
        if mdp.num_states != int(d["S"]) or mdp.num_actions != int(d["A"]):
            raise ValueError("S/A fields disagree with the array shapes")
        return mdp

    def to_json(self) -> str:
        # json writes floats with repr(), which round-trips doubles exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularSP":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TabularSP":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary deterministic policy: one action index per state."""

    action_of: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action_of", _frozen(self.action_of, dtype=np.int64))

    def __len__(self):
        return len(self.action_of)

    def __getitem__(self, s):
        return int(self.action_of[s])


def _actions(mdp: TabularSP, pi) -> np.ndarray:
    acts = pi.action_of if isinstance(pi, Policy) else np.asarray(pi, dtype=np.int64)
    if acts.shape != (mdp.num_states,):
        raise ValueError(f"policy must assign one action to each of {mdp.num_states} states")
    if np.any(acts < 0) or np.any(acts >= mdp.num_actions):
        raise ValueError("policy action out of range")
    return acts


@dataclass
class ValidationReport:
    simplex_ok: bool
    reward_range_ok: bool
    all_proper: bool
    trapping_set: list[int] | None = None

    @property
    def ok(self) -> bool:
        return self.simplex_ok and self.reward_range_ok and self.all_proper


@dataclass
class SolveResult:
    v_star: np.ndarray
    q_star: np.ndarray
    pi_star: Policy
    init_state: int
    residual: float
    iterations: int

    @property
    def V_star(self) -> float:
        return abs(float(self.v_star[self.init_state]))

    @property
    def B_star(self) -> float:
        return float(np.max(np.abs(self.v_star[:-1])))

    @property
    def v_init(self) -> float:
        """Signed optimal value of the initial state."""
        return float(self.v_star[self.init_state])


@dataclass
class PolicyStats:
    value: np.ndarray
    second_moment: np.ndarray
    hit_time: np.ndarray
    r_star: float
    t_max: float
    r_hat: float | None = None
    r_max_hat: float | None = None
    num_policies: int = 0


def trapping_set(mdp: TabularSP) -> list[int]:
    """Largest set of states that some policy can keep away from the goal forever.

    Iteratively drops states none of whose actions keep all of their support
    inside the surviving set.  An empty result means every policy is proper.
    """
    S = mdp.num_states
    support = mdp.transition[:, :, :S] > 0
    leaks_goal = mdp.transition[:, :, S] > 0
    alive = np.ones(S, dtype=bool)
    while True:
        # action a keeps s inside `alive` iff it has no mass on g or on a dead state
        leaks = leaks_goal | np.any(support & ~alive[None, None, :], axis=2)
        keep = alive & np.any(~leaks, axis=1)
        if np.array_equal(keep, alive):
            break
        alive = keep
    return [int(s) for s in np.flatnonzero(alive)]


def validate(mdp: TabularSP) -> ValidationReport:
    P = mdp.transition
    simplex_ok = bool(
        np.all(P >= 0) and np.all(np.abs(P.sum(axis=2) - 1.0) <= SIMPLEX_TOL)
    )
    r = mdp.reward
    reward_range_ok = bool(np.all(np.isfinite(r)) and np.all(np.abs(r) <= 1.0))
    trap = trapping_set(mdp)
    return ValidationReport(
        simplex_ok=simplex_ok,
        reward_range_ok=reward_range_ok,
        all_proper=not trap,
        trapping_set=trap or None,
    )


def _goal_unreachable(mdp: TabularSP, acts: np.ndarray) -> list[int]:
    S = mdp.num_states
    rows = mdp.transition[np.arange(S), acts]  # (S, S+1)
    reach = rows[:, S] > 0
    while True:
        new = reach | np.any((rows[:, :S] > 0) & reach[None, :], axis=1)
        if np.array_equal(new, reach):
            break
        reach = new
    return [int(s) for s in np.flatnonzero(~reach)]


def _policy_system(mdp: TabularSP, pi):
    acts = _actions(mdp, pi)
    bad = _goal_unreachable(mdp, acts)
    if bad:
        raise NotProper(f"goal unreachable under the policy from states {bad}")
    S = mdp.num_states
    idx = np.arange(S)
    P_pi = mdp.transition[idx, acts, :S]
    r_pi = mdp.reward[idx, acts]
    return np.eye(S) - P_pi, P_pi, r_pi


def _solve(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("linear solve produced non-finite values")
    return x


def evaluate_policy(mdp: TabularSP, pi) -> np.ndarray:
    """Exact value V^pi of a proper policy (length S, goal excluded)."""
    lhs, _, r_pi = _policy_system(mdp, pi)
    return _solve(lhs, r_pi)


def second_moment(mdp: TabularSP, pi) -> np.ndarray:
    """E^pi[(sum of rewards)^2 | s_1 = s] for every state s."""
    lhs, P_pi, r_pi = _policy_system(mdp, pi)
    v = _solve(lhs, r_pi)
    return _solve(lhs, r_pi**2 + 2.0 * r_pi * (P_pi @ v))


def hitting_time(mdp: TabularSP, pi) -> np.ndarray:
    """Expected number of actions taken before reaching the goal."""
    lhs, _, _ = _policy_system(mdp, pi)
    return _solve(lhs, np.ones(mdp.num_states))


def _q_values(mdp: TabularSP, v: np.ndarray) -> np.ndarray:
    v_ext = np.append(v, 0.0)
    return mdp.reward + mdp.transition @ v_ext


def _greedy(q: np.ndarray, rtol: float = 0.0) -> np.ndarray:
    # first index within rtol of the row max, i.e. ties -> smallest action
    qmax = q.max(axis=1, keepdims=True)
    slack = rtol * (1.0 + np.abs(qmax))
    return np.argmax(q >= qmax - slack, axis=1)


def _residual(q: np.ndarray, v: np.ndarray) -> float:
    return float(np.max(np.abs(q.max(axis=1) - v)))


def solve_optimal(mdp: TabularSP, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER,
                  check_every: int = 64) -> SolveResult:
    """Optimal values and a greedy optimal policy.

    Runs Bellman optimality sweeps from V = 0.  Every ``check_every`` sweeps
    (and once the sweep change drops below ``tol``) the greedy policy is
    evaluated exactly; the iterate jumps to that exact value, and the solve
    stops as soon as the exact value satisfies the optimality equation to
    ``tol``.  The jump keeps instances with very long expected episodes
    (millions of plain sweeps) cheap.
    """
    report = validate(mdp)
    if not report.all_proper:
        raise NotProper(f"improper policies exist; trapping set {report.trapping_set}")
    S = mdp.num_states
    v = np.zeros(S)
    for it in range(1, max_iter + 1):
        q = _q_values(mdp, v)
        v_new = q.max(axis=1)
        change = float(np.max(np.abs(v_new - v)))
        v = v_new
        if change <= tol or it % check_every == 0:
            pi = _greedy(_q_values(mdp, v))
            v_pi = evaluate_policy(mdp, pi)
            if _residual(_q_values(mdp, v_pi), v_pi) <= tol:
                return _finish(mdp, v_pi, it)
            v = v_pi
    raise NoConvergence(f"no convergence to tol={tol} in {max_iter} sweeps")


def _finish(mdp: TabularSP, v: np.ndarray, iterations: int) -> SolveResult:
    pi = _greedy(_q_values(mdp, v), rtol=1e-12)
    v_star = evaluate_policy(mdp, pi)
    q_star = _q_values(mdp, v_star)
    return SolveResult(
        v_star=np.append(v_star, 0.0),
        q_star=q_star,
        pi_star=Policy(pi),
        init_state=mdp.init_state,
        residual=_residual(q_star, v_star),
        iterations=iterations,
    )


def max_expected_time(mdp: TabularSP, tol: float = DEFAULT_TOL,
                      max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, float]:
    """Per-state maximal expected time to the goal and its max over states.

    Expected time is the value of the same MDP with reward 1 on every pair,
    so this reuses :func:`solve_optimal`.
    """
    unit = TabularSP(np.ones_like(mdp.reward), mdp.transition, mdp.init_state)
    sol = solve_optimal(unit, tol=tol, max_iter=max_iter)
    T = sol.v_star[:-1].copy()
    return T, float(T.max())


def policy_sweep_stats(mdp: TabularSP, enum_limit: int = 4096,
                       tol: float = DEFAULT_TOL) -> PolicyStats:
    """Statistics of the optimal policy plus brute-force R / R_max proxies.

    ``r_hat`` and ``r_max_hat`` maximize over stationary deterministic
    policies only, so they are lower approximations of the sup over
    history-dependent policies.
    """
    S, A = mdp.num_states, mdp.num_actions
    count = A**S
    if count > enum_limit:
        raise EnumLimitExceeded(f"A^S = {count} exceeds enum_limit = {enum_limit}")
    sol = solve_optimal(mdp, tol=tol)
    r_hat = 0.0
    r_max_hat = 0.0
    for acts in itertools.product(range(A), repeat=S):
        m = np.maximum(second_moment(mdp, acts), 0.0)
        r_hat = max(r_hat, math.sqrt(m[mdp.init_state]))
        r_max_hat = max(r_max_hat, math.sqrt(m.max()))
    pi = sol.pi_star
    m_star = second_moment(mdp, pi)
    _, t_max = max_expected_time(mdp, tol=tol)
    return PolicyStats(
        value=evaluate_policy(mdp, pi),
        second_moment=m_star,
        hit_time=hitting_time(mdp, pi),
        r_star=float(np.sqrt(np.maximum(m_star, 0.0)).max()),
        t_max=t_max,
        r_hat=r_hat,
        r_max_hat=r_max_hat,
        num_policies=count,
    )


def perturb_rewards(mdp: TabularSP, K: int, t_star_bound: float) -> TabularSP:
    """Shift every reward down by 1 / (K * t_star_bound), clamped at -1."""
    if K < 1 or t_star_bound < 1:
        raise ValueError("need K >= 1 and t_star_bound >= 1")
    shifted = np.maximum(mdp.reward - 1.0 / (K * t_star_bound), -1.0)
    return TabularSP(shifted, mdp.transition, mdp.init_state)


def add_virtual_init(mdp: TabularSP, rho: Sequence[float]) -> TabularSP:
    """Append a relay state that starts episodes from distribution ``rho``.

    The new state gets index S (original indices are unchanged) and becomes
    the initial state; every action on it has reward 0 and next-state
    distribution ``rho``.
    """
    S, A = mdp.num_states, mdp.num_actions
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (S,) or np.any(rho < 0) or abs(rho.sum() - 1.0) > SIMPLEX_TOL:
        raise BadDistribution("rho must be a probability vector over the S states")
    P = np.zeros((S + 1, A, S + 2))
    P[:S, :, :S] = mdp.transition[:, :, :S]
    P[:S, :, S + 1] = mdp.transition[:, :, S]
    P[S, :, :S] = rho
    r = np.zeros((S + 1, A))
    r[:S] = mdp.reward
    return TabularSP(r, P, S)
