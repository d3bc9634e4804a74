"""Command-line workflows: instance loading, experiments, serialization.

Subcommands: solve, stability, simulate, sweep, decompose, compare,
figure1, figure2.  Exit codes: 0 success, 1 validation/usage error,
2 runtime failure.  Floats are serialized with 17 significant digits so
reruns are byte-comparable; ``FLUIDGATE_THREADS`` caps the worker pool.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import FluidgateError, UsageError, ValidationError
from .lp import check_nondegenerate, solve
from .market import Market, build_dlp, load_market
from .policies import PolicyConfig
from .simulator import (RegretReport, compare_known_unknown,
                        estimate_decomposition, run_batch, run_episode,
                        stopping_box)
from .stability import stability_report

_POLICY_FLAGS = {
    "adaptive-unknown": "adaptive_unknown",
    "adaptive-known": "adaptive_known",
    "static-fluid": "static_fluid",
    "greedy": "greedy",
}
_ACCEPT_FLAGS = {"binary": "randomized_binary", "partial": "partial"}
_UNSEEN_FLAGS = {"dual-price": "dual_price", "always-accept": "always_accept"}

EPISODE_HEADER = "T,trial,seed,reward_to_tau,reward_to_T,regret_fluid,regret_hindsight,tau,tau_S"


def instance_path(name: str) -> Path:
    """Path of a packaged instance file (paper_nondegenerate / paper_degenerate)."""
    return Path(resources.files("fluidgate") / "instances" / f"{name}.json")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not serializable: {type(obj)}")


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, default=_json_default)
        fh.write("\n")


def load_instance(path) -> Market:
    return load_market(path)


def _policy_config(args) -> PolicyConfig:
    return PolicyConfig(
        kind=_POLICY_FLAGS[args.policy],
        acceptance_mode=_ACCEPT_FLAGS[args.acceptance],
        unseen_type_rule=_UNSEEN_FLAGS[args.unseen],
    )


def _episode_rows(report: RegretReport):
    opt = {row.T: row.opt_fluid for row in report.rows}
    for T, trial, r in report.episodes:
        fluid = opt[T] - r.reward_to_tau
        hind = (r.hindsight_value - r.reward_to_tau
                if r.hindsight_value is not None else float("nan"))
        yield [T, trial, r.seed, r.reward_to_tau, r.reward_to_T, fluid, hind,
               r.tau, r.tau_S]


def write_episode_csv(path: Path, report: RegretReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(EPISODE_HEADER + "\n")
        for row in _episode_rows(report):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_summary_csv(path: Path, report: RegretReport) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ("T,trials,mean_regret_fluid,ci99_low,ci99_high,"
              "mean_regret_hindsight,mean_tau,mean_tau_s")
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in report.rows:
            cells = [row.T, row.trials, row.mean_regret_fluid,
                     row.ci99_fluid[0], row.ci99_fluid[1],
                     row.mean_regret_hindsight, row.mean_tau, row.mean_tau_s]
            fh.write(",".join(_fmt(x) for x in cells) + "\n")


def _summary_dict(report: RegretReport) -> dict:
    return {
        "policy": report.policy.kind,
        "base_seed": report.base_seed,
        "slope": report.slope,
        "intercept": report.intercept,
        "residual": report.residual,
        "per_T": [
            {
                "T": r.T, "trials": r.trials, "opt_fluid": r.opt_fluid,
                "mean_regret_fluid": r.mean_regret_fluid,
                "std_regret_fluid": r.std_regret_fluid,
                "ci99_fluid": list(r.ci99_fluid),
                "mean_regret_hindsight": r.mean_regret_hindsight,
                "ci99_hindsight": list(r.ci99_hindsight),
                "mean_hindsight_value": r.mean_hindsight_value,
                "mean_tau": r.mean_tau, "mean_tau_s": r.mean_tau_s,
            }
            for r in report.rows
        ],
    }


# ---------------------------------------------------------------------------
# subcommands

def _cmd_solve(args):
    market = load_instance(args.instance)
    rhs = np.array([float(x) for x in args.rhs.split(",")]) if args.rhs else None
    lp = build_dlp(market, rhs)
    sol = solve(lp)
    report = check_nondegenerate(sol, lp.n_rows, lp.n_vars)
    out = {
        "status": sol.status,
        "objective_value": sol.objective_value,
        "primal": sol.primal.tolist(),
        "duals": sol.duals.tolist(),
        "nondegenerate": report.nondegenerate,
        "nonzero_counts": [report.primal_nonzeros, report.slack_nonzeros,
                           report.box_nonzeros],
    }
    print(json.dumps(out, indent=2, default=_json_default))
    return 0


def _cmd_stability(args):
    market = load_instance(args.instance)
    print(json.dumps(stability_report(market).to_dict(), indent=2,
                     default=_json_default))
    return 0


def _cmd_simulate(args):
    market = load_instance(args.instance).with_horizon(args.T)
    config = _policy_config(args)
    out = Path(args.out)
    if args.trace:
        if args.trials != 1:
            raise UsageError("--trace implies --trials 1")
        from .market import episode_seed
        seed = episode_seed(args.seed, args.T, 0)
        box = stopping_box(market)
        result, steps = run_episode(market, config, seed, trace=True, box=box)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "trace.csv", "w") as fh:
            fh.write("t,arriving_type,amount,lp_value,gap," +
                     ",".join(f"B_{i}" for i in range(market.m)) + "\n")
            for s in steps:
                cells = [s.t, s.arriving_type, s.amount,
                         s.lp_value if s.lp_value is not None else float("nan"),
                         s.expected_consumption_gap
                         if s.expected_consumption_gap is not None else float("nan"),
                         *s.remaining_before.tolist()]
                fh.write(",".join(_fmt(x) for x in cells) + "\n")
        print(json.dumps({"seed": seed, "reward_to_tau": result.reward_to_tau,
                          "tau": result.tau, "tau_S": result.tau_S},
                         indent=2, default=_json_default))
        return 0
    report = run_batch(market, config, [args.T], args.trials, args.seed,
                       workers=args.workers)
    write_episode_csv(out / "episodes.csv", report)
    summary = _summary_dict(report)
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2, default=_json_default))
    return 0


def _cmd_sweep(args):
    market = load_instance(args.instance)
    config = _policy_config(args)
    grid = _parse_grid(args.T_grid)
    report = run_batch(market.with_horizon(grid[-1]), config, grid,
                       args.trials, args.seed, workers=args.workers)
    out = Path(args.out)
    write_episode_csv(out / "episodes.csv", report)
    write_summary_csv(out / "sweep_summary.csv", report)
    summary = _summary_dict(report)
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2, default=_json_default))
    return 0


def _cmd_decompose(args):
    market = load_instance(args.instance)
    config = _policy_config(args)
    rep = estimate_decomposition(market, config, args.T, args.trials,
                                 args.seed, workers=args.workers)
    out = {
        "T": rep.T, "trials": rep.trials,
        "term_basic": rep.term_basic, "term_rejected": rep.term_rejected,
        "term_leftover": rep.term_leftover,
        "total_rhs": rep.total_rhs, "total_lhs": rep.total_lhs,
        "se_lhs": rep.se_lhs, "se_terms": list(rep.se_terms),
        "mean_diff": rep.mean_diff, "se_diff": rep.se_diff,
    }
    print(json.dumps(out, indent=2, default=_json_default))
    return 0


def _cmd_compare(args):
    market = load_instance(args.instance)
    rep = compare_known_unknown(market, args.T, args.trials, args.seed,
                                workers=args.workers)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "paired_differences.csv", "w") as fh:
        fh.write("trial,regret_diff\n")
        for i, d in enumerate(rep.diffs):
            fh.write(f"{i},{_fmt(float(d))}\n")
    summary = {
        "T": rep.T, "trials": rep.trials,
        "mean_regret_known": rep.mean_regret_known,
        "mean_regret_unknown": rep.mean_regret_unknown,
        "mean_diff": rep.mean_diff, "se_diff": rep.se_diff,
        "std_diff": rep.std_diff,
        "underpowered": rep.trials < 100,
    }
    _write_json(out_dir / "compare_summary.json", summary)
    print(json.dumps(summary, indent=2, default=_json_default))
    return 0


def run_figure1(nondegenerate, degenerate, T_grid, trials, seed, out_dir,
                workers=None):
    """Regret-vs-horizon sweeps for both paper instances."""
    if trials < 2:
        raise UsageError("figure1 needs at least 2 trials (CI undefined)")
    out_dir = Path(out_dir)
    config = PolicyConfig("adaptive_unknown")
    summary = {}
    for label, path in (("nondegenerate", nondegenerate),
                        ("degenerate", degenerate)):
        market = load_instance(path)
        report = run_batch(market.with_horizon(T_grid[-1]), config, T_grid,
                           trials, seed, workers=workers)
        write_summary_csv(out_dir / f"figure1_{label}.csv", report)
        write_episode_csv(out_dir / f"figure1_{label}_episodes.csv", report)
        summary[label] = _summary_dict(report)
    _write_json(out_dir / "figure1_summary.json", summary)
    return summary


def _cmd_figure1(args):
    grid = _parse_grid(args.T_grid)
    summary = run_figure1(args.nondegenerate, args.degenerate, grid,
                          args.trials, args.seed, args.out,
                          workers=args.workers)
    print(json.dumps({k: {"slope": v["slope"]} for k, v in summary.items()},
                     indent=2))
    return 0


def run_figure2(instance, T, trials, seed, out_dir, workers=None):
    """Paired known-vs-unknown comparison (histogram raw data)."""
    market = load_instance(instance)
    lp = build_dlp(market)
    degenerate = not check_nondegenerate(solve(lp), lp.n_rows,
                                         lp.n_vars).nondegenerate
    if degenerate:
        print("warning: degenerate instance; parity claim not attached",
              file=sys.stderr)
    rep = compare_known_unknown(market, T, trials, seed, workers=workers)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "figure2_differences.csv", "w") as fh:
        fh.write("trial,regret_diff\n")
        for i, d in enumerate(rep.diffs):
            fh.write(f"{i},{_fmt(float(d))}\n")
    summary = {
        "T": rep.T, "trials": rep.trials,
        "mean_regret_known": rep.mean_regret_known,
        "mean_regret_unknown": rep.mean_regret_unknown,
        "mean_diff": rep.mean_diff, "se_diff": rep.se_diff,
        "std_diff": rep.std_diff,
        "degenerate_instance": degenerate,
        "underpowered": trials < 100,
    }
    _write_json(out_dir / "figure2_summary.json", summary)
    return summary


def _cmd_figure2(args):
    summary = run_figure2(args.instance, args.T, args.trials, args.seed,
                          args.out, workers=args.workers)
    print(json.dumps(summary, indent=2, default=_json_default))
    return 0


# ---------------------------------------------------------------------------
# parser

def _parse_grid(text: str):
    grid = [int(x) for x in text.split(",") if x.strip()]
    if any(b <= a for a, b in zip(grid, grid[1:])) or any(g <= 0 for g in grid):
        raise UsageError("T grid must be strictly increasing positive integers")
    return grid


def _add_policy_flags(p):
    p.add_argument("--policy", choices=sorted(_POLICY_FLAGS),
                   default="adaptive-unknown")
    p.add_argument("--acceptance", choices=sorted(_ACCEPT_FLAGS),
                   default="binary")
    p.add_argument("--unseen", choices=sorted(_UNSEEN_FLAGS),
                   default="dual-price")


def _add_common(p, grid=False):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--out", default="fluidgate-out")
    p.add_argument("--workers", type=int, default=None)
    if grid:
        p.add_argument("--T-grid", dest="T_grid",
                       default="500,1000,2000,4000,8000")
    else:
        p.add_argument("--T", type=int, default=1000)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fluidgate")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the deterministic LP of an instance")
    p.add_argument("instance")
    p.add_argument("--rhs", default=None, help="override capacities, comma separated")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("stability", help="print the stability report")
    p.add_argument("instance")
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("simulate", help="run episodes at one horizon")
    p.add_argument("instance")
    _add_policy_flags(p)
    _add_common(p)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over a horizon grid")
    p.add_argument("instance")
    _add_policy_flags(p)
    _add_common(p, grid=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("decompose", help="three-term regret decomposition")
    p.add_argument("instance")
    _add_policy_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("compare", help="paired known-vs-unknown comparison")
    p.add_argument("instance")
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("figure1", help="regret-vs-horizon sweeps, both instances")
    p.add_argument("--nondegenerate", default=str(instance_path("paper_nondegenerate")))
    p.add_argument("--degenerate", default=str(instance_path("paper_degenerate")))
    _add_common(p, grid=True)
    p.set_defaults(func=_cmd_figure1)

    p = sub.add_parser("figure2", help="paired comparison on one instance")
    p.add_argument("--instance", default=str(instance_path("paper_nondegenerate")))
    _add_common(p)
    p.set_defaults(func=_cmd_figure2)
    ap.set_defaults(trials=200)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FluidgateError, OSError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
