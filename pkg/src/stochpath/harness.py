"""Learner/environment orchestration, regret accounting, audits and sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .environments import EnvInstance, build_env_mdp
from .errors import BadConfig, DegenerateFit
from .learners import LearnerConfig, LearnerState, Mode, StepRecord, new_learner
from .mdp import SolveResult, TabularSP, max_expected_time, solve_optimal
from .records import FixedPolicyPlayer, RegretTrace, play_episode
from .slp import EstimatorConfig, preset_zeta, vislp_run

DEFAULT_STEP_CAP = 10**7
ALGORITHMS = ("vi_sp", "vi_ssp", "vi_slp", "oracle")


@dataclass(frozen=True)
class AlgoSpec:
    """Which learner to run and its knobs.

    ``B=None`` for vi_sp means max(1, B*) from the exact solve.  For vi_slp,
    ``U=None`` uses max(2, T_max) (an absolute bound on V* when rewards are
    at most 1) and ``zeta=None`` uses the ``zeta_variant`` preset.
    """

    name: str = "vi_sp"
    B: float | None = None
    delta: float = 0.1
    c1: float = 2.0
    c2: float = 8.0
    zeta: float | None = None
    U: float | None = None
    c_upper: float = 1.0
    zeta_variant: str = "S2"

    def __post_init__(self):
        if self.name not in ALGORITHMS:
            raise BadConfig(f"unknown algorithm {self.name!r}; pick one of {ALGORITHMS}")

    @classmethod
    def coerce(cls, spec: Any) -> "AlgoSpec":
        if isinstance(spec, AlgoSpec):
            return spec
        if isinstance(spec, str):
            return cls(name=spec)
        return cls(**dict(spec))


def resolve_B(algo: AlgoSpec, sol: SolveResult) -> float:
    return float(algo.B) if algo.B is not None else max(1.0, sol.B_star)


def estimator_config(algo: AlgoSpec, mdp: TabularSP, K: int) -> EstimatorConfig:
    U = algo.U
    if U is None:
        U = max(2.0, max_expected_time(mdp)[1])
    zeta = algo.zeta
    if zeta is None:
        zeta = preset_zeta(K, mdp.num_states, mdp.num_actions, U, algo.zeta_variant)
    return EstimatorConfig(zeta=zeta, U=U, delta=algo.delta, c_upper=algo.c_upper,
                           c1=algo.c1, c2=algo.c2)


def make_learner(algo: AlgoSpec, mdp: TabularSP, sol: SolveResult, sink=None):
    S, A = mdp.num_states, mdp.num_actions
    if algo.name == "oracle":
        return FixedPolicyPlayer(sol.pi_star.action_of, mdp.init_state)
    if algo.name == "vi_sp":
        cfg = LearnerConfig(B_init=resolve_B(algo, sol), delta=algo.delta, c1=algo.c1, c2=algo.c2)
    elif algo.name == "vi_ssp":
        cfg = LearnerConfig(B_init=1.0, delta=algo.delta, c1=algo.c1, c2=algo.c2,
                            mode=Mode.SSP_ADAPTIVE)
    else:
        raise BadConfig(f"{algo.name} is not a per-step learner")
    return new_learner(S, A, cfg, init_state=mdp.init_state, sink=sink)


def run_experiment(env_spec: Any, algo_spec: Any, K: int, seed: int = 0,
                   step_cap: int | None = DEFAULT_STEP_CAP, sink=None,
                   solve: SolveResult | None = None, learner_hook=None) -> RegretTrace:
    """Play K episodes and account regret against the exact V*(s_init).

    ``sink`` receives per-step :class:`StepRecord` s from vi_sp / vi_ssp;
    ``learner_hook(learner)`` is called once the learner exists (audits use
    it to attach to the live tables).
    """
    mdp = build_env_mdp(env_spec)
    sol = solve if solve is not None else solve_optimal(mdp)
    algo = AlgoSpec.coerce(algo_spec)
    env = EnvInstance(mdp, seed=seed, step_cap=step_cap)
    if algo.name == "vi_slp":
        cfg = estimator_config(algo, mdp, K)
        trace = vislp_run(env, K, cfg, sol.v_init, seed=seed, B_star=sol.B_star)
        trace.config = {**asdict(algo), **trace.config}
        return trace
    learner = make_learner(algo, mdp, sol, sink=sink)
    if learner_hook is not None:
        learner_hook(learner)
    trace = RegretTrace(v_init=sol.v_init, B_star=sol.B_star, seed=seed, algorithm=algo.name,
                        config=asdict(algo))
    for _ in range(K):
        reward, steps = play_episode(env, learner)
        trace.add(reward, steps, learner.B_cur)
    return trace


# -- audits -------------------------------------------------------------------


@dataclass
class AuditReport:
    steps: int = 0
    violating_steps: int = 0
    worst_violation: float = 0.0

    @property
    def violated(self) -> bool:
        return self.violating_steps > 0


class OptimismAudit:
    """Step sink flagging committed Q values below Q* - tol."""

    def __init__(self, q_star: np.ndarray, tol: float = 1e-9):
        self.q_star = np.asarray(q_star)
        self.tol = tol
        self.report = AuditReport()

    def __call__(self, rec: StepRecord) -> None:
        self.report.steps += 1
        gap = float(self.q_star[rec.s, rec.a]) - rec.q
        if gap > self.tol:
            self.report.violating_steps += 1
            self.report.worst_violation = max(self.report.worst_violation, gap)


def optimism_audit(records: Iterable[StepRecord], solve: SolveResult,
                   tol: float = 1e-9) -> AuditReport:
    audit = OptimismAudit(solve.q_star, tol)
    for rec in records:
        audit(rec)
    return audit.report


class InvariantAudit:
    """Checks the learner's structural invariants after every update.

    Attach with ``learner_hook=audit.attach`` and ``sink=audit``.  Failures
    are collected as strings in ``failures`` rather than raised.
    """

    def __init__(self):
        self.failures: list[str] = []
        self.steps = 0
        self.learner: LearnerState | None = None
        self._last_q: np.ndarray | None = None
        self._last_B = math.nan

    def attach(self, learner: LearnerState) -> None:
        self.learner = learner
        self._last_q = learner.Q.copy()
        self._last_B = learner.B_cur

    def _fail(self, rec: StepRecord, what: str) -> None:
        if len(self.failures) < 100:
            self.failures.append(f"t={rec.t} s={rec.s} a={rec.a}: {what}")

    def __call__(self, rec: StepRecord) -> None:
        L = self.learner
        self.steps += 1
        s, a = rec.s, rec.a
        if rec.q > self._last_q[s, a]:
            self._fail(rec, f"Q increased {self._last_q[s, a]} -> {rec.q}")
        self._last_q[s, a] = rec.q
        if L.V[s] != L.Q[s].max():
            self._fail(rec, "V[s] != max_a Q[s, a]")
        if L.V[L.S] != 0.0:
            self._fail(rec, "V[g] != 0")
        if L.n[s, a] != L.n3[s, a].sum():
            self._fail(rec, "n != sum n3")
        if L.mode is Mode.SSP_ADAPTIVE:
            if abs(rec.q) > rec.B_cur:
                self._fail(rec, f"|Q| = {abs(rec.q)} exceeds B = {rec.B_cur}")
            if not (-rec.B_cur <= L.Q.min() and L.Q.max() <= 0.0):
                self._fail(rec, "Q outside [-B, 0]")
            ratio = rec.B_cur / self._last_B
            if ratio < 1 or 2 ** round(math.log2(ratio)) != ratio:
                self._fail(rec, f"B moved {self._last_B} -> {rec.B_cur} (not a doubling)")
            self._last_B = rec.B_cur
        elif L.Q.max() > L.cfg.B_init:
            self._fail(rec, "Q above B")

    def finish(self) -> None:
        L = self.learner
        if L is not None and not np.array_equal(L.n, L.n3.sum(axis=2)):
            self.failures.append("final counters: n != sum n3")


@dataclass
class RunAudit:
    seed: int
    final_regret: float
    final_B: float
    optimism: AuditReport
    invariant_failures: list[str]


def audit_run(env_spec: Any, algo_spec: Any, K: int, seed: int, tol: float = 1e-9,
              solve: SolveResult | None = None,
              step_cap: int | None = DEFAULT_STEP_CAP) -> RunAudit:
    mdp = build_env_mdp(env_spec)
    sol = solve if solve is not None else solve_optimal(mdp)
    opt = OptimismAudit(sol.q_star, tol)
    inv = InvariantAudit()

    def sink(rec):
        opt(rec)
        inv(rec)

    trace = run_experiment(mdp, algo_spec, K, seed=seed, step_cap=step_cap, sink=sink,
                           solve=sol, learner_hook=inv.attach)
    inv.finish()
    return RunAudit(seed, trace.final_regret, trace.final_B, opt.report, inv.failures)


# -- sweeps -------------------------------------------------------------------


@dataclass
class SweepResult:
    rows: list[tuple[int, int, float, int]] = field(default_factory=list)  # K, seed, regret, steps

    def Ks(self) -> list[int]:
        return sorted({r[0] for r in self.rows})

    def regrets(self, K: int) -> np.ndarray:
        return np.array([r[2] for r in self.rows if r[0] == K])

    def summary(self) -> dict[int, tuple[float, float]]:
        return {K: (float(self.regrets(K).mean()), float(self.regrets(K).std())) for K in self.Ks()}

    def to_csv(self) -> str:
        from .records import fmt
        lines = ["K,seed,final_regret,total_steps"]
        lines += [f"{K},{seed},{fmt(reg)},{steps}" for K, seed, reg, steps in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        out = cls()
        for line in text.strip().splitlines()[1:]:
            K, seed, reg, steps = line.split(",")
            out.rows.append((int(K), int(seed), float(reg), int(steps)))
        return out


def _sweep_job(args) -> tuple[int, int, float, int]:
    mdp, algo, K, seed, step_cap, sol = args
    trace = run_experiment(mdp, algo, K, seed=seed, step_cap=step_cap, solve=sol)
    return K, seed, trace.final_regret, trace.T


def sweep(env_spec: Any, algo_spec: Any, Ks: Sequence[int], seeds: Sequence[int],
          workers: int = 1, step_cap: int | None = DEFAULT_STEP_CAP) -> SweepResult:
    """Final regret for every (K, seed); rows ordered by (K, seed) whatever ``workers`` is."""
    mdp = build_env_mdp(env_spec)
    sol = solve_optimal(mdp)
    algo = AlgoSpec.coerce(algo_spec)
    jobs = [(mdp, algo, int(K), int(seed), step_cap, sol) for K in Ks for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    return SweepResult(sorted(rows, key=lambda r: (r[0], r[1])))


def fit_scaling(sweep_or_points, exclude_nonpositive: bool = False) -> tuple[float, float, float]:
    """Least-squares line through (ln K, ln mean regret): (slope, intercept, rms residual).

    Accepts a :class:`SweepResult` or a mapping / sequence of (K, mean regret).
    """
    if isinstance(sweep_or_points, SweepResult):
        pts = [(K, m) for K, (m, _) in sweep_or_points.summary().items()]
    elif isinstance(sweep_or_points, dict):
        pts = list(sweep_or_points.items())
    else:
        pts = list(sweep_or_points)
    bad = [(K, m) for K, m in pts if not m > 0]
    if bad:
        if not exclude_nonpositive:
            raise DegenerateFit(f"non-positive mean regret at {bad}")
        pts = [(K, m) for K, m in pts if m > 0]
    if len({K for K, _ in pts}) < 3:
        raise DegenerateFit("need at least 3 distinct K values with positive mean regret")
    x = np.log([float(K) for K, _ in pts])
    y = np.log([float(m) for _, m in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))
