"""Command line entry point: ``stochpath <command> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors; a
runtime error also prints one JSON line ``{"error": ..., "message": ...}``
to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .environments import Family, build_env_mdp, gen_random_proper
from .errors import StochPathError
from .harness import ALGORITHMS, AlgoSpec, audit_run, fit_scaling, run_experiment, sweep
from .mdp import TabularSP, max_expected_time, solve_optimal, validate
from .records import fmt


def load_env(path: str) -> TabularSP:
    """An MDP JSON file, or a generator-parameter JSON file (has ``"family"``)."""
    d = json.loads(Path(path).read_text())
    if "transition" in d:
        return TabularSP.from_dict(d)
    return build_env_mdp(d)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_algo_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", required=True, help="MDP JSON or generator-parameter JSON")
    p.add_argument("--algo", required=True, choices=ALGORITHMS)
    p.add_argument("--B", type=float, default=None, help="vi_sp scale (default max(1, B*))")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--c1", type=float, default=2.0)
    p.add_argument("--c2", type=float, default=8.0)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--U", type=float, default=None)
    p.add_argument("--c-upper", type=float, default=1.0)
    p.add_argument("--zeta-variant", choices=("S2", "S3"), default="S2")
    p.add_argument("--step-cap", type=int, default=10**7)


def _algo(args) -> AlgoSpec:
    return AlgoSpec(name=args.algo, B=args.B, delta=args.delta, c1=args.c1, c2=args.c2,
                    zeta=args.zeta, U=args.U, c_upper=args.c_upper,
                    zeta_variant=args.zeta_variant)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochpath",
                                     description="Goal-terminated RL laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check simplex, reward range and properness")
    p.add_argument("mdp")

    p = sub.add_parser("solve", help="exact optimal values")
    p.add_argument("mdp")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--json", action="store_true", help="print one JSON object instead")

    p = sub.add_parser("gen", help="generate an instance")
    p.add_argument("family", choices=[f.value for f in Family] + ["random"])
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--A", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", dest="Delta", type=float, default=0.05)
    p.add_argument("--v", type=float, default=4.0)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--K", type=int, default=10_000)
    p.add_argument("--good-action", type=int, default=None)
    p.add_argument("--copies", type=int, default=1)
    p.add_argument("--good-copy", type=int, default=0)
    p.add_argument("--S", type=int, default=3)
    p.add_argument("--p-goal-min", type=float, default=0.2)
    p.add_argument("--reward-mode", choices=("mixed", "nonneg", "nonpos"), default="mixed")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("run", help="one learning run")
    _add_algo_args(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", default=None, help="write the trace (CSV, or JSON by suffix)")

    p = sub.add_parser("sweep", help="final regret over a (K, seed) grid")
    _add_algo_args(p)
    p.add_argument("--Ks", type=_int_list, required=True)
    p.add_argument("--seeds", type=int, required=True, help="number of seeds (0..N-1)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("audit", help="optimism and invariant audit over seeds")
    _add_algo_args(p)
    p.add_argument("--K", type=int, default=50)
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    return parser


def cmd_validate(args) -> int:
    rep = validate(TabularSP.load(args.mdp))
    print(json.dumps(asdict(rep)))
    return 0 if rep.ok else 1


def cmd_solve(args) -> int:
    mdp = TabularSP.load(args.mdp)
    sol = solve_optimal(mdp, tol=args.tol)
    _, t_max = max_expected_time(mdp, tol=args.tol)
    if args.json:
        print(json.dumps({"v_star": sol.v_star[:-1].tolist(), "pi_star": sol.pi_star.action_of.tolist(),
                          "V_star": sol.V_star, "B_star": sol.B_star, "T_max": t_max,
                          "residual": sol.residual}))
        return 0
    for s, v in enumerate(sol.v_star[:-1]):
        print(f"V*({s})={v:.10g}  pi*({s})={sol.pi_star[s]}")
    print(f"V_star={sol.V_star:.10g}")
    print(f"B_star={sol.B_star:.10g}")
    print(f"T_max={t_max:.10g}")
    return 0


def cmd_gen(args) -> int:
    if args.family == "random":
        mdp = gen_random_proper(args.S, args.A, args.p_goal_min, args.reward_mode, args.seed)
    else:
        params = {k: getattr(args, k) for k in
                  ("A", "epsilon", "Delta", "v", "c", "K", "copies")}
        params.update(family=args.family, good_action=args.good_action, good_copy=args.good_copy)
        mdp = build_env_mdp(params)
    mdp.save(args.out)
    return 0


def cmd_run(args) -> int:
    trace = run_experiment(load_env(args.env), _algo(args), args.K, seed=args.seed,
                           step_cap=args.step_cap)
    if args.trace:
        trace.save(args.trace)
    print(json.dumps({"K": trace.K, "T": trace.T, "final_regret": trace.final_regret,
                      "final_B": trace.final_B, "flags": trace.flags}))
    return 0


def cmd_sweep(args) -> int:
    res = sweep(load_env(args.env), _algo(args), args.Ks, range(args.seeds),
                workers=args.workers, step_cap=args.step_cap)
    Path(args.out).write_text(res.to_csv())
    out = {"means": {str(K): m for K, (m, _) in res.summary().items()}}
    try:
        slope, intercept, resid = fit_scaling(res, exclude_nonpositive=True)
        out.update(slope=slope, intercept=intercept, residual=resid)
    except StochPathError as exc:
        out["fit_error"] = str(exc)
    print(json.dumps(out))
    return 0


def cmd_audit(args) -> int:
    mdp = load_env(args.env)
    sol = solve_optimal(mdp)
    algo = _algo(args)
    runs = [audit_run(mdp, algo, args.K, seed, tol=args.tol, solve=sol, step_cap=args.step_cap)
            for seed in range(args.seeds)]
    print(json.dumps({
        "runs": len(runs),
        "optimism_violation_fraction": sum(r.optimism.violated for r in runs) / len(runs),
        "worst_violation": max(r.optimism.worst_violation for r in runs),
        "invariant_failures": sum(len(r.invariant_failures) for r in runs),
        "final_B_over_2Bstar_fraction": sum(r.final_B > 2 * sol.B_star for r in runs) / len(runs),
    }))
    return 0


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "gen": cmd_gen, "run": cmd_run,
            "sweep": cmd_sweep, "audit": cmd_audit}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (StochPathError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
