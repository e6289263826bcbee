"""Instance generators and the seeded episode simulator.

Randomness comes from numpy's counter-based ``Philox`` bit generator, seeded
explicitly, so a seed pins the outcome stream on every platform.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from .errors import BadParams, EpisodeNotStarted, StepCapExceeded
from .mdp import TabularSP, add_virtual_init


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


class Family(str, enum.Enum):
    GENERAL_SP = "general_lb"
    RSTAR = "rstar_lb"
    SLP_ADAPTIVITY = "slp_lb"


class RewardMode(str, enum.Enum):
    MIXED = "mixed"
    NONNEG = "nonneg"
    NONPOS = "nonpos"


@dataclass
class LowerBoundParams:
    family: Family
    A: int = 2
    epsilon: float = 0.1
    Delta: float = 0.05
    v: float = 4.0
    c: float = 1.0
    K: int = 10_000
    good_action: int | None = None
    copies: int = 1
    good_copy: int = 0

    def __post_init__(self):
        self.family = Family(self.family)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LowerBoundParams":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def _check_action(p: LowerBoundParams, allowed: int) -> None:
    if p.good_action is not None and not 0 <= p.good_action < allowed:
        raise BadParams(f"good_action must lie in [0, {allowed}), got {p.good_action}")
    if p.copies < 1:
        raise BadParams("copies must be >= 1")
    if not 0 <= p.good_copy < p.copies:
        raise BadParams(f"good_copy must lie in [0, {p.copies})")


def _mix(eps: float, tilt: float) -> tuple[float, float, float]:
    """(to x, to y, to goal) for a row leaning ``tilt`` towards x."""
    return (1 - eps + tilt) / 2, (1 - eps - tilt) / 2, eps


def gen_general_lb(p: LowerBoundParams) -> TabularSP:
    """Two-state mixed-reward instance, optionally replicated.

    Copy ``j`` owns states ``x = 2j`` and ``y = 2j + 1``.  A relay state
    (index ``2 * copies``) starts each episode uniformly over all states.
    Every copy carries the same good action.
    """
    eps, dlt = p.epsilon, p.Delta
    if not (0 < eps <= 0.25 and 0 < dlt <= 0.25):
        raise BadParams("need epsilon, Delta in (0, 1/4]")
    if p.A < 1:
        raise BadParams("need A >= 1")
    _check_action(p, p.A)
    S = 2 * p.copies
    r = np.zeros((S, p.A))
    P = np.zeros((S, p.A, S + 1))
    for j in range(p.copies):
        x, y = 2 * j, 2 * j + 1
        r[x], r[y] = 1.0, -1.0
        for a in range(p.A):
            tilt = dlt if a == p.good_action else 0.0
            P[x, a, x], P[x, a, y], P[x, a, S] = _mix(eps, tilt)
            P[y, a, x], P[y, a, y], P[y, a, S] = _mix(eps, 0.0)
    return add_virtual_init(TabularSP(r, P, 0), np.full(S, 1.0 / S))


def gen_rstar_lb(p: LowerBoundParams) -> TabularSP:
    """Instance showing R* alone cannot control regret.

    Action ``A - 1`` on x exits with reward 1; the other x-actions mix between
    x and y, tilted by Delta towards y except the good action, which tilts
    towards x.  With ``copies > 1`` the x states form a balanced binary tree
    in heap order (root = copy 0 = initial state) and two connector actions
    ``A`` and ``A + 1`` are added: zero reward, deterministic move to the
    left / right child, or straight to the goal at a missing child.  On y the
    connectors behave like every other y-action.  Only copy ``good_copy``
    has the good action.
    """
    eps, dlt = p.epsilon, p.Delta
    if not (0 < eps <= 0.125 and 0 < dlt <= 0.125):
        raise BadParams("need epsilon, Delta in (0, 1/8]")
    if dlt**2 > eps:
        raise BadParams(f"need Delta^2 <= epsilon, got Delta={dlt}, epsilon={eps}")
    if p.A < 2:
        raise BadParams("need A >= 2 (one exit action plus mixing actions)")
    _check_action(p, p.A - 1)
    tree = p.copies > 1
    A = p.A + 2 if tree else p.A
    S = 2 * p.copies
    r = np.zeros((S, A))
    P = np.zeros((S, A, S + 1))
    for j in range(p.copies):
        x, y = 2 * j, 2 * j + 1
        r[x, : p.A], r[y] = 1.0, -1.0
        good = p.good_action if j == p.good_copy else None
        for a in range(p.A - 1):
            tilt = dlt if a == good else -dlt
            P[x, a, x], P[x, a, y], P[x, a, S] = _mix(eps, tilt)
        P[x, p.A - 1, S] = 1.0
        for a in range(A):
            P[y, a, x], P[y, a, y], P[y, a, S] = _mix(eps, 0.0)
        if tree:
            for side in (0, 1):
                child = 2 * j + 1 + side
                P[x, p.A + side, 2 * child if child < p.copies else S] = 1.0
    return TabularSP(r, P, 0)


def slp_lb_probs(v: float, c: float, K: int, A: int) -> tuple[float, float]:
    """(P(y | x, b), P(g | y, good action)) of the SLP adaptivity instance."""
    scale = c * math.sqrt(K) * math.log(v * K) ** 2
    p_b = math.sqrt(A) / scale
    return p_b, p_b / (2 * v)


def gen_slp_lb(p: LowerBoundParams) -> TabularSP:
    """SLP instance where adapting to an unknown B* has a price.

    State 0 is x (initial).  Action ``A - 1`` on x is the special action b.
    With ``copies = 1`` state 1 is y; otherwise y becomes a full binary tree
    with ``copies`` leaves (states ``1 .. 2 * copies - 1`` in heap order)
    whose internal nodes move to child ``a % 2`` with zero reward, and the
    good action sits on leaf ``good_copy``.  Every other step earns reward 1.
    """
    if p.v < 2:
        raise BadParams("need v >= 2")
    if p.c <= 0 or p.K < 1:
        raise BadParams("need c > 0 and K >= 1")
    if p.A < 2:
        raise BadParams("need A >= 2")
    _check_action(p, p.A)
    p_b, q = slp_lb_probs(p.v, p.c, p.K, p.A)
    if not (0 < p_b <= 1 and 0 < q <= 1):
        raise BadParams(f"transition probabilities out of range: P(y|x,b)={p_b}, P(g|y,a*)={q}")
    A = p.A
    n_y = 2 * p.copies - 1
    S = 1 + n_y
    g = S
    b = A - 1
    r = np.ones((S, A))
    P = np.zeros((S, A, S + 1))
    x, y_root = 0, 1
    for a in range(A):
        if a == b:
            P[x, a, y_root], P[x, a, g] = p_b, 1 - p_b
        else:
            P[x, a, x], P[x, a, g] = 1 - 1 / p.v, 1 / p.v
    first_leaf = p.copies - 1
    for i in range(n_y):
        y = 1 + i
        if i < first_leaf:
            r[y] = 0.0
            for a in range(A):
                P[y, a, 1 + 2 * i + 1 + a % 2] = 1.0
            continue
        good = p.good_action if i - first_leaf == p.good_copy else None
        for a in range(A):
            if a == good:
                P[y, a, y], P[y, a, g] = 1 - q, q
            else:
                P[y, a, y], P[y, a, g] = 0.5, 0.5
    return TabularSP(r, P, x)


def gen_random_proper(S: int, A: int, p_goal_min: float,
                      reward_mode: RewardMode | str = RewardMode.MIXED,
                      seed: int = 0) -> TabularSP:
    """Random instance in which every row sends ``p_goal_min`` mass to the goal."""
    if not 0 < p_goal_min <= 1:
        raise BadParams("p_goal_min must lie in (0, 1]")
    mode = RewardMode(reward_mode)
    rng = make_rng(seed)
    P = np.zeros((S, A, S + 1))
    P[:, :, :S] = (1 - p_goal_min) * rng.dirichlet(np.ones(S), size=(S, A))
    P[:, :, S] = p_goal_min
    lo, hi = {RewardMode.MIXED: (-1, 1), RewardMode.NONNEG: (0, 1),
              RewardMode.NONPOS: (-1, 0)}[mode]
    r = rng.uniform(lo, hi, size=(S, A))
    return TabularSP(r, P, 0)


_GENERATORS = {
    Family.GENERAL_SP: gen_general_lb,
    Family.RSTAR: gen_rstar_lb,
    Family.SLP_ADAPTIVITY: gen_slp_lb,
}


def generate(p: LowerBoundParams) -> TabularSP:
    return _GENERATORS[p.family](p)


def build_env_mdp(spec: Any) -> TabularSP:
    """Resolve an environment spec to a TabularSP.

    Accepts a TabularSP, a path-like with a ``"path"`` key, a lower-bound
    parameter dict (``"family"`` in general_lb / rstar_lb / slp_lb), or a
    random-instance dict with ``"family": "random"``.
    """
    if isinstance(spec, TabularSP):
        return spec
    if isinstance(spec, LowerBoundParams):
        return generate(spec)
    spec = dict(spec)
    if "path" in spec:
        return TabularSP.load(spec["path"])
    if spec.get("family") == "random":
        return gen_random_proper(int(spec["S"]), int(spec["A"]), float(spec["p_goal_min"]),
                                 spec.get("reward_mode", "mixed"), int(spec.get("seed", 0)))
    return generate(LowerBoundParams.from_dict(spec))


def _cdf_rows(P: np.ndarray) -> list[list[list[float]]]:
    out = []
    for rows in P:
        per_action = []
        for row in rows:
            cdf = np.cumsum(row)
            cdf /= cdf[-1]
            last = int(np.flatnonzero(row > 0)[-1])
            cdf[last:] = 1.0
            per_action.append(cdf.tolist())
        out.append(per_action)
    return out


class EnvInstance:
    """Seeded simulator for one run.

    ``reset()`` starts an episode at the initial state; ``step(a)`` returns
    ``(reward, outcome)`` where outcome ``S`` is the goal, which ends the
    episode.  ``step_cap`` bounds the total number of steps of the run.
    """

    _BLOCK = 4096

    def __init__(self, mdp: TabularSP, seed: int = 0, step_cap: int | None = None):
        self.mdp = mdp
        self.rng_seed = int(seed)
        self.step_cap = step_cap
        self.current_state = mdp.init_state
        self.step_count = 0
        self.episode_count = 0
        self.in_episode = False
        self._rng = make_rng(seed)
        self._cdf = _cdf_rows(mdp.transition)
        self._reward = mdp.reward.tolist()
        self._goal = mdp.num_states
        self._u: list[float] = []
        self._i = 0

    def reset(self) -> int:
        self.in_episode = True
        self.current_state = self.mdp.init_state
        return self.current_state

    def _uniform(self) -> float:
        if self._i == len(self._u):
            self._u = self._rng.random(self._BLOCK).tolist()
            self._i = 0
        u = self._u[self._i]
        self._i += 1
        return u

    def step(self, a: int) -> tuple[float, int]:
        if not self.in_episode:
            raise EpisodeNotStarted("call reset() before step()")
        if self.step_cap is not None and self.step_count >= self.step_cap:
            raise StepCapExceeded(f"step cap {self.step_cap} reached")
        s = self.current_state
        outcome = bisect.bisect_right(self._cdf[s][a], self._uniform())
        self.step_count += 1
        reward = self._reward[s][a]
        if outcome == self._goal:
            self.in_episode = False
            self.episode_count += 1
            self.current_state = self.mdp.init_state
        else:
            self.current_state = outcome
        return reward, outcome


def env_step(env: EnvInstance, a: int) -> tuple[float, int]:
    return env.step(a)
