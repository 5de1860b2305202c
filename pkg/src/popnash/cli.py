"""Command-line entry point.

Four subcommands: ``run`` executes a sweep config, ``aggregate`` averages
trace files into a summary CSV plus a rendered figure, and the two
``verify-counterexample`` / ``check-theorem`` commands run the built-in
correctness reports.  Failures exit nonzero after printing a single
``error: ...`` line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    aggregate_traces,
    expand_trace_globs,
    load_config,
    run_sweep,
    run_theorem_sweep,
    verify_counterexample,
    write_aggregate_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popnash",
        description="Population-based Nash solvers on symmetric zero-sum games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute every cell of a sweep config")
    p_run.add_argument("config", help="JSON config file")
    p_run.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config override, e.g. scheduler.max_steps=2000; wins over the file",
    )

    p_agg = sub.add_parser("aggregate", help="average trace CSVs into a summary")
    p_agg.add_argument("globs", nargs="+", help="trace file globs")
    p_agg.add_argument(
        "--group-by",
        required=True,
        help="comma-separated metadata keys, e.g. algorithm,workers",
    )
    p_agg.add_argument("-o", "--output", required=True, help="summary CSV path")
    p_agg.add_argument(
        "--no-plot",
        action="store_true",
        help="skip rendering the figure next to the summary CSV",
    )

    sub.add_parser(
        "verify-counterexample",
        help="check the fixture where rectified training provably stalls",
    )

    p_thm = sub.add_parser(
        "check-theorem",
        help="exhaustively check sub-population equilibria on random games",
    )
    p_thm.add_argument("--dim", type=int, required=True, help="game dimension (small)")
    p_thm.add_argument("--games", type=int, required=True, help="number of seeded games")
    p_thm.add_argument("--seed", type=int, default=0, help="first game seed")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config, args.override)

    def progress(cell, path):
        algorithm, game_label, run_seed, lr, workers = cell
        print(
            f"ran {algorithm} game={game_label} seed={run_seed} lr={lr:g} "
            f"workers={workers} -> {path}"
        )

    paths = run_sweep(config, progress=progress)
    print(f"wrote {len(paths)} trace files to {config.resolved_output_dir()}")
    return 0


def _cmd_aggregate(args) -> int:
    keys = [k.strip() for k in args.group_by.split(",") if k.strip()]
    paths = expand_trace_globs(args.globs)
    group_keys, rows, warnings = aggregate_traces(paths, keys)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    out = Path(args.output)
    write_aggregate_csv(group_keys, rows, out)
    print(f"wrote summary for {len(paths)} traces to {out}")
    if not args.no_plot:
        from .plotting import plot_aggregate

        figure = out.with_suffix(".png")
        plot_aggregate(group_keys, rows, figure)
        print(f"rendered {figure}")
    return 0


def _cmd_verify_counterexample() -> int:
    report = verify_counterexample()
    print("\n".join(report.lines()))
    if not report.passed:
        print(f"error: counterexample check failed: {report.failures[0]}", file=sys.stderr)
        return 1
    return 0


def _cmd_check_theorem(args) -> int:
    report = run_theorem_sweep(args.dim, args.games, args.seed)
    print("\n".join(report.lines()))
    if report.failed:
        print(
            f"error: restricted-equilibrium check failed on seeds {list(report.failed)}",
            file=sys.stderr,
        )
        return 1
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "aggregate":
            return _cmd_aggregate(args)
        if args.command == "verify-counterexample":
            return _cmd_verify_counterexample()
        if args.command == "check-theorem":
            return _cmd_check_theorem(args)
        raise ValueError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
