"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 ingestion error,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import ConfigurationError, IngestionError
from .harness import calibrate_capacity, run_many, run_scenario
from .outputs import emit_outputs, plots_from_dir
from .scenario import load_scenario, load_sweep


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --seeds value {text!r}") from exc


def _print_summaries(results) -> None:
    print(f"{'scenario':38s} {'seed':>6s} {'initial':>8s} {'conv':>5s} "
          f"{'steps':>7s} {'trigger':>8s}")
    for summary, _ in results:
        if summary.error is not None:
            print(f"{summary.scenario:38s} {summary.seed:6d} FAILED: {summary.error}")
            continue
        steps = "-" if summary.steps_to_converge is None else str(summary.steps_to_converge)
        print(
            f"{summary.scenario:38s} {summary.seed:6d} {summary.initial_reward:8.4f} "
            f"{'yes' if summary.converged else 'no':>5s} {steps:>7s} {summary.trigger_rate:8.4f}"
        )


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    seeds = _parse_seeds(args.seeds) if args.seeds else None
    results = run_scenario(scenario, seeds=seeds, parallel=args.parallel)
    _print_summaries(results)
    if args.out:
        paths = emit_outputs(results, args.out)
        print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    sweep = load_sweep(args.sweep)
    scenarios = sweep.expand()
    total = sum(len(sc.seeds) for sc in scenarios)
    print(f"sweep: {len(scenarios)} scenarios, {total} runs")
    results = run_many(scenarios, parallel=args.parallel)
    _print_summaries(results)
    if args.out:
        paths = emit_outputs(results, args.out)
        print(f"wrote {len(paths)} files to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    scenario = load_scenario(args.scenario)
    probe_seeds = _parse_seeds(args.probe_seeds) if args.probe_seeds else scenario.seeds
    capacity = calibrate_capacity(
        scenario.traffic_models, scenario.env, args.load_ratio, probe_seeds
    )
    print(f"capacity_bytes_per_prb_slot = {capacity}")
    return 0


def _cmd_plot(args) -> int:
    paths = plots_from_dir(args.out_dir)
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slicesim",
        description="Seedable O-RAN slicing simulator and DRL experiment harness",
    )
    parser.add_argument("--version", action="version", version=f"slicesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario over its seeds")
    p_run.add_argument("scenario")
    p_run.add_argument("--seeds", help="comma-separated seed override, e.g. 1,2,3")
    p_run.add_argument("--out", help="output directory for CSVs, summary.json and SVGs")
    p_run.add_argument("--parallel", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a sweep file (patterns x modes x noise)")
    p_sweep.add_argument("sweep")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument("--parallel", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cal = sub.add_parser("calibrate", help="print the calibrated per-unit capacity")
    p_cal.add_argument("scenario")
    p_cal.add_argument("--load-ratio", type=float, default=1.2)
    p_cal.add_argument("--probe-seeds", help="comma-separated probe seeds")
    p_cal.set_defaults(func=_cmd_calibrate)

    p_plot = sub.add_parser("plot", help="re-emit SVGs from an output directory")
    p_plot.add_argument("out_dir")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
