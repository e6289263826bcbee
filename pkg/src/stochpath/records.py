"""Regret traces, the episode loop, and their CSV / JSON formats."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TRACE_COLUMNS = ("k", "episode_reward", "episode_steps", "cumulative_regret", "B_cur")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class EpisodeRecord:
    k: int
    episode_reward: float
    episode_steps: int
    cumulative_regret: float
    B_cur: float


@dataclass
class RegretTrace:
    """Per-episode regret bookkeeping against the exact optimum.

    ``v_init`` is the signed optimal value V*(s_init) used for accounting.
    """

    v_init: float
    B_star: float = math.nan
    seed: int = 0
    algorithm: str = ""
    config: dict = field(default_factory=dict)
    records: list[EpisodeRecord] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def add(self, reward: float, steps: int, B_cur: float) -> None:
        prev = self.records[-1].cumulative_regret if self.records else 0.0
        self.records.append(EpisodeRecord(len(self.records) + 1, float(reward), int(steps),
                                          prev + (self.v_init - reward), float(B_cur)))

    @property
    def V_star(self) -> float:
        return abs(self.v_init)

    @property
    def K(self) -> int:
        return len(self.records)

    @property
    def T(self) -> int:
        return sum(r.episode_steps for r in self.records)

    @property
    def total_reward(self) -> float:
        return math.fsum(r.episode_reward for r in self.records)

    @property
    def final_regret(self) -> float:
        return self.records[-1].cumulative_regret if self.records else 0.0

    @property
    def final_B(self) -> float:
        return self.records[-1].B_cur if self.records else math.nan

    def regret_at(self, k: int) -> float:
        return self.records[k - 1].cumulative_regret

    def header(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "v_init": self.v_init,
            "B_star": self.B_star,
            "config": self.config,
            "flags": self.flags,
        }

    # -- CSV -----------------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header()) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.k, fmt(r.episode_reward), r.episode_steps,
                        fmt(r.cumulative_regret), fmt(r.B_cur)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RegretTrace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError("trace CSV must start with a '#' JSON header line")
        head = json.loads(lines[0][1:])
        rows = list(csv.reader(lines[1:]))
        if tuple(rows[0]) != TRACE_COLUMNS:
            raise ValueError(f"unexpected columns {rows[0]}")
        trace = cls._from_header(head)
        for k, rew, steps, cum, B in rows[1:]:
            trace.records.append(EpisodeRecord(int(k), float(rew), int(steps), float(cum), float(B)))
        return trace

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        d = self.header()
        d["records"] = [[r.k, r.episode_reward, r.episode_steps, r.cumulative_regret, r.B_cur]
                        for r in self.records]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RegretTrace":
        d = json.loads(text)
        trace = cls._from_header(d)
        trace.records = [EpisodeRecord(int(k), float(r), int(n), float(c), float(b))
                         for k, r, n, c, b in d["records"]]
        return trace

    @classmethod
    def _from_header(cls, d: dict) -> "RegretTrace":
        return cls(v_init=float(d["v_init"]), B_star=float(d["B_star"]), seed=int(d["seed"]),
                   algorithm=d["algorithm"], config=d["config"], flags=list(d["flags"]))

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_csv())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegretTrace):
            return NotImplemented
        return self.to_json() == other.to_json()


class FixedPolicyPlayer:
    """Plays a fixed stationary policy through the learner interface."""

    def __init__(self, actions, init_state: int = 0, B: float = math.nan):
        self.actions = [int(a) for a in np.asarray(actions)]
        self.init_state = init_state
        self.current_state = init_state
        self.B_cur = B

    def select_action(self, s: int) -> int:
        return self.actions[s]

    def observe(self, s: int, a: int, r: float, s_next: int):
        return None


def play_episode(env, learner) -> tuple[float, int]:
    """Run one full episode; returns (total reward, number of steps)."""
    goal = env.mdp.num_states
    s = env.reset()
    total = 0.0
    steps = 0
    while True:
        a = learner.select_action(s)
        r, s_next = env.step(a)
        learner.observe(s, a, r, s_next)
        total += r
        steps += 1
        if s_next == goal:
            return total, steps
        s = s_next
