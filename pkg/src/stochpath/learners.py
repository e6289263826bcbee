"""Incremental optimistic value-iteration learners.

Two modes share one update rule:

* ``SP_FIXED_B``: the scale ``B`` is given.  Q and V start at ``B`` and every
  visited pair is lowered to ``min(r + P_bar V + bonus, Q)``.
* ``SSP_ADAPTIVE``: for non-positive rewards with unknown scale.  Q and V
  start at 0, ``B`` starts at 1, and ``B`` doubles until the tentative
  update fits in ``[-B, B]``.

The learner only reacts to ``select_action`` / ``observe``; the caller owns
the environment and the episode loop.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import BadConfig, DoublingCapExceeded, ProtocolViolation


class Mode(str, enum.Enum):
    SP_FIXED_B = "sp_fixed_b"
    SSP_ADAPTIVE = "ssp_adaptive"


class EpisodeSignal(enum.Enum):
    CONTINUING = 0
    EPISODE_ENDED = 1


@dataclass(frozen=True)
class LearnerConfig:
    B_init: float = 1.0
    delta: float = 0.1
    c1: float = 2.0
    c2: float = 8.0
    mode: Mode = Mode.SP_FIXED_B
    max_doublings: int = 64

    def check(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise BadConfig(f"delta must lie in (0, 1), got {self.delta}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise BadConfig("c1 and c2 must be positive")
        if 2.0 * self.c1**2 > self.c2:
            raise BadConfig(f"need 2*c1^2 <= c2, got c1={self.c1}, c2={self.c2}")
        if self.B_init < 1.0:
            raise BadConfig(f"B_init must be >= 1, got {self.B_init}")

    def with_B(self, B: float) -> "LearnerConfig":
        return replace(self, B_init=float(B))


def iota(SA: int, delta: float, B: float, n: int) -> float:
    """Confidence log term ln(SA/delta) + ln ln(B n), inner argument clamped at e."""
    return math.log(SA / delta) + math.log(math.log(max(math.e, B * n)))


def bonus(var: float, n: int, B: float, iota_val: float, cfg: LearnerConfig) -> float:
    return max(cfg.c1 * math.sqrt(var * iota_val / n), cfg.c2 * B * iota_val / n)


def backup(P: np.ndarray, V: np.ndarray, n: int, B: float, iota_val: float,
           cfg: LearnerConfig) -> float:
    """Bonus-inflated expectation P.V + bonus(Var(P, V)); monotone in V when 2 c1^2 <= c2."""
    pv = float(P @ V)
    var = max(float(P @ (V * V)) - pv * pv, 0.0)
    return pv + bonus(var, n, B, iota_val, cfg)


class StepRecord(NamedTuple):
    t: int
    k: int
    s: int
    a: int
    r: float
    s_next: int
    bonus: float
    iota: float
    B_cur: float
    q: float


TraceSink = Callable[[StepRecord], None]


class LearnerState:
    """Q/V tables, visit counters and scale of one learning run."""

    def __init__(self, S: int, A: int, cfg: LearnerConfig, init_state: int = 0,
                 sink: TraceSink | None = None):
        cfg.check()
        self.S, self.A = S, A
        self.cfg = cfg
        self.init_state = init_state
        self.sink = sink
        if cfg.mode is Mode.SP_FIXED_B:
            start = float(cfg.B_init)
        else:
            start = 0.0
        self.Q = np.full((S, A), start)
        self.V = np.full(S + 1, start)
        self.V[S] = 0.0
        self.n = np.zeros((S, A), dtype=np.int64)
        self.n3 = np.zeros((S, A, S + 1), dtype=np.int64)
        self.t = 0
        self.k = 1
        self.B_cur = float(cfg.B_init)
        self.current_state = init_state
        self._pending: tuple[int, int] | None = None
        self._log_sa = math.log(S * A / cfg.delta)

    @property
    def mode(self) -> Mode:
        return self.cfg.mode

    def select_action(self, s: int) -> int:
        a = int(np.argmax(self.Q[s]))
        self._pending = (s, a)
        return a

    def _iota(self, B: float, n: int) -> float:
        return self._log_sa + math.log(math.log(max(math.e, B * n)))

    def observe(self, s: int, a: int, r: float, s_next: int) -> EpisodeSignal:
        if self._pending != (s, a):
            raise ProtocolViolation(f"observed (s={s}, a={a}) but pending action is {self._pending}")
        self._pending = None
        self.t += 1
        self.n[s, a] += 1
        self.n3[s, a, s_next] += 1
        n = int(self.n[s, a])
        counts = self.n3[s, a]
        V = self.V
        pv = float(counts @ V) / n
        var = max(float(counts @ (V * V)) / n - pv * pv, 0.0)
        cfg = self.cfg
        q_old = float(self.Q[s, a])

        if cfg.mode is Mode.SP_FIXED_B:
            B = self.B_cur
            io = self._iota(B, n)
            b = max(cfg.c1 * math.sqrt(var * io / n), cfg.c2 * B * io / n)
            q_new = min(r + pv + b, q_old)
        else:
            for _ in range(cfg.max_doublings + 1):
                B = self.B_cur
                io = self._iota(B, n)
                b = max(cfg.c1 * math.sqrt(var * io / n), cfg.c2 * B * io / n)
                q_new = min(r + pv + b, q_old)
                if abs(q_new) <= B:
                    break
                self.B_cur = 2.0 * B
            else:
                raise DoublingCapExceeded(
                    f"scale doubled {cfg.max_doublings} times in one step (t={self.t})")

        self.Q[s, a] = q_new
        self.V[s] = self.Q[s].max()
        if self.sink is not None:
            self.sink(StepRecord(self.t, self.k, s, a, float(r), int(s_next), b, io,
                                 self.B_cur, q_new))
        if s_next == self.S:
            self.k += 1
            self.current_state = self.init_state
            return EpisodeSignal.EPISODE_ENDED
        self.current_state = int(s_next)
        return EpisodeSignal.CONTINUING


def new_learner(S: int, A: int, cfg: LearnerConfig, init_state: int = 0,
                sink: TraceSink | None = None) -> LearnerState:
    return LearnerState(S, A, cfg, init_state=init_state, sink=sink)


def select_action(state: LearnerState, s: int) -> int:
    return state.select_action(s)


def observe(state: LearnerState, s: int, a: int, r: float, s_next: int) -> EpisodeSignal:
    return state.observe(s, a, r, s_next)
