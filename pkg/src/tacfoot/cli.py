"""``tacfoot`` command line: run experiments, summarise logs, emit plot data.

Exit codes: 0 success, 2 bad config or unreadable log, 3 every seed failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, ParseError
from .experiment import PLOT_KINDS, compute_metrics, emit_plot_data, load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tacfoot", description="Tactile edge following on a simulated legged robot.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config over one or more seeds")
    p.add_argument("--config", required=True, help="TOML or JSON experiment file")
    p.add_argument("--seed", type=int, action="append", help="seed to run; repeat for several (overrides the file)")
    p.add_argument("--terrain", choices=("beam", "table"), help="terrain scenario (overrides the file)")
    p.add_argument("--disable-sensing", action="store_true", help="blind walking: zero prediction, no retraining")
    p.add_argument("--use-image-pipeline", action="store_true", help="route every tap through render+detect+match")
    p.add_argument("--out", help="output directory (overrides the file)")

    p = sub.add_parser("metrics", help="print metrics for run logs")
    p.add_argument("logs", nargs="+")

    p = sub.add_parser("plotdata", help="emit plot-ready CSV from run logs")
    p.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p.add_argument("--out", help="directory for <log>.<kind>.csv files; stdout when omitted")
    p.add_argument("logs", nargs="+")
    return parser


def _cmd_run(args) -> int:
    config = load_config(
        args.config,
        terrain=args.terrain,
        seeds=args.seed,
        sensing=False if args.disable_sensing else None,
        use_image_pipeline=True if args.use_image_pipeline else None,
        out_dir=args.out,
    )
    report = run_experiment(config)
    print(json.dumps(report.aggregate(), sort_keys=True))
    for r in report.runs:
        print(f"seed {r.seed}: {r.event}, {r.footholds} footholds, mean |d| {r.mean_displacement:.2f} mm, "
              f"{r.taps} taps, {r.arcs} arcs", file=sys.stderr)
    return EXIT_OK if report.successful else EXIT_RUN


def _cmd_metrics(args) -> int:
    report = compute_metrics(args.logs)
    print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    if args.out is None:
        for i, log in enumerate(args.logs):
            text = emit_plot_data(log, args.kind)
            sys.stdout.write(text if i == 0 else text.split("\n", 1)[1])
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for log in args.logs:
        target = out / f"{Path(log).stem}.{args.kind}.csv"
        target.write_text(emit_plot_data(log, args.kind))
        print(target)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "metrics": _cmd_metrics, "plotdata": _cmd_plotdata}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError) as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
