"""Command-line interface.

Exit codes: 0 success, 2 safety or feasibility failure, 3 config error.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys

from ..errors import (
    ConfigError,
    DiagnosticBoundError,
    DisturbanceBoundError,
    EmptyBufferWindowError,
    ModelMismatchError,
    ParameterWindowError,
    SafetyViolationError,
    SeedInfeasibleError,
)
from . import benchmark as bench_mod
from .config import load_config
from .fuzz import safety_fuzz
from .reproduce import reproduce
from .runner import execute
from .traces import write_trace_csv

_FEASIBILITY_ERRORS = (
    SafetyViolationError,
    SeedInfeasibleError,
    ParameterWindowError,
    EmptyBufferWindowError,
    ModelMismatchError,
    DisturbanceBoundError,
    DiagnosticBoundError,
)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ogdbzc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one online run from a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="output directory for the trace CSV")

    rep_p = sub.add_parser("reproduce", help="regenerate the 2-D experiment figures")
    rep_p.add_argument("figure", choices=["fig1a", "fig1b", "fig2"])
    rep_p.add_argument("--out", required=True)
    rep_p.add_argument("--seed", type=int, default=0)

    fuzz_p = sub.add_parser("fuzz", help="safety fuzzing across seeds and regimes")
    fuzz_p.add_argument("--config", required=True)
    fuzz_p.add_argument("--seeds", type=int, required=True)

    bench_p = sub.add_parser("benchmark", help="best safe linear policy in hindsight")
    bench_p.add_argument("--config", required=True)
    bench_p.add_argument("--grid-step", type=float, default=0.02)

    return p


def _cmd_run(args) -> int:
    config = load_config(args.config)
    trace = execute(config, seed=args.seed)
    out_dir = args.out or config.out_dir
    path = write_trace_csv(trace, os.path.join(out_dir, "trace.csv"))
    print(f"run complete: T={trace.horizon} total_cost={trace.total_cost:.6g}")
    if "warnings" in trace.header:
        print(f"warnings: {trace.header['warnings']}")
    print(f"trace written to {path}")
    return 0


def _cmd_reproduce(args) -> int:
    files = reproduce(args.figure, args.out, seed=args.seed)
    for f in files:
        print(f"wrote {f}")
    return 0


def _cmd_fuzz(args) -> int:
    config = load_config(args.config)
    summary = safety_fuzz(config, args.seeds)
    print(summary.describe())
    print("fuzz passed: zero violations")
    return 0


def _cmd_benchmark(args) -> int:
    config = load_config(args.config)
    trace = execute(config)
    results, n_grid, n_stable, n_safe = bench_mod.best_safe_linear(
        config, trace.w, grid_step=args.grid_step
    )
    K_star, cost = results[trace.horizon]
    print(
        f"grid: {n_grid} candidates, {n_stable} stable, {n_safe} certified safe "
        f"({n_stable - n_safe} removed by the safety filter)"
    )
    print(f"best safe linear policy: K* = {K_star.ravel().tolist()}")
    print(f"benchmark cost: {cost:.6g}  algorithm cost: {trace.total_cost:.6g}")
    print(f"regret: {trace.total_cost - cost:.6g}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "reproduce": _cmd_reproduce,
        "fuzz": _cmd_fuzz,
        "benchmark": _cmd_benchmark,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=_sys.stderr)
        return 3
    except _FEASIBILITY_ERRORS as e:
        print(f"safety/feasibility failure: {e}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
