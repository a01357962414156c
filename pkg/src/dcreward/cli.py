"""Command line entry point: ``dcreward {baseline,optimize,sweep,verify}``.

Exit codes: 0 success, 2 config error, 3 infeasible, 4 solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .core import ModelError
from .harness import (
    ConfigError,
    ExperimentReport,
    baseline_row,
    build_scenario,
    export_report,
    load_config,
    run_experiment,
)
from .optimizer import ConvergenceError, InfeasibleError, Tolerances, build_program, solve, verify_solution
from .traces import TraceError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONVERGENCE = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--trace", help="request CSV (slot,requests)")
    common.add_argument("--wind", help="wind CSV (slot,wind_mps)")
    common.add_argument("--mode", choices=["base", "shutdown", "renewable"])
    common.add_argument("--dmax", type=int, help="maximum deferral in slots")
    common.add_argument("--out", help="report CSV path")
    common.add_argument("--tol", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="dcreward", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("baseline", parents=[common], help="bill with no demand response")
    sub.add_parser("optimize", parents=[common], help="solve one mode at one D")
    sub.add_parser("sweep", parents=[common], help="every configured mode and D")
    sub.add_parser("verify", parents=[common], help="solve and print constraint residuals")
    return p


def _config(args):
    over = dict(trace=args.trace, wind=args.wind, out=args.out, tol=args.tol, seed=args.seed)
    if args.mode:
        over["modes"] = [args.mode]
    if args.dmax is not None:
        over["d_values"] = [args.dmax]
    return load_config(args.config, **over)


def _print_rows(report: ExperimentReport) -> None:
    print(f"{'mode':<10} {'D':>3} {'peak_kw':>11} {'peak':>7} {'cost_usd':>11} {'cost':>7} {'reward':>9} {'status'}")
    for r in report.all_rows:
        print(f"{r.mode:<10} {r.D:>3} {r.peak_kw:>11.3f} {r.peak_norm:>7.4f} {r.cost_usd:>11.3f} "
              f"{r.cost_norm:>7.4f} {r.reward_usd:>9.3f} {r.status}")


def _failure_code(report: ExperimentReport) -> int:
    statuses = {r.status for r in report.failed}
    if "no-convergence" in statuses:
        return EXIT_CONVERGENCE
    return EXIT_INFEASIBLE if statuses else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        if args.command in ("optimize", "verify"):
            cfg.modes = cfg.modes[:1]
            cfg.d_values = [cfg.d_values[-1]] if args.dmax is None else [args.dmax]
        scenario = build_scenario(cfg)
    except (ConfigError, TraceError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "baseline":
        report = ExperimentReport(baseline_row(scenario), [])
    elif args.command == "verify":
        mode, D = cfg.modes[0], cfg.d_values[0]
        try:
            program = build_program(mode, scenario.demand, scenario.fleet, scenario.billing, D,
                                    shutdown=scenario.shutdown, green=scenario.green)
            sol = solve(program, Tolerances(cfg.tol, cfg.tol))
        except InfeasibleError as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        except ConvergenceError as exc:
            print(f"no convergence: {exc}", file=sys.stderr)
            return EXIT_CONVERGENCE
        except ModelError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        report = verify_solution(sol, cfg.tol)
        print(f"{mode} D={D}: cost={sol.cost.total:.6f} reward={sol.cost.reward:.6f} "
              f"baseline={sol.cost.baseline:.6f}")
        print(report)
        return EXIT_OK if report.ok else EXIT_INFEASIBLE
    else:
        report = run_experiment(cfg, scenario)

    _print_rows(report)
    if cfg.out:
        try:
            export_report(report, cfg.out)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return _failure_code(report)


if __name__ == "__main__":
    sys.exit(main())
