"""Command line front end.

Subcommands:
  run     execute a scenario (file path or shipped name), print the summary
  replay  recompute metrics from a run log, print the summary
  export  convert a run log to a trajectory CSV

Exit codes: 0 on completion, 2 for invalid scenario or log input, 3 when a
required backend failed and fallbacks were disabled.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .runner import BackendFailure, CorruptLog, export_csv, replay_log, run_scenario
from .scenario import InvalidScenario, load_scenario

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="behavnav",
        description="Behavior-rule guided navigation: simulate, replay, export.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and print the summary")
    run_p.add_argument("scenario", help="scenario JSON path, or the name of a shipped scenario")
    run_p.add_argument("--out", default=None, metavar="DIR", help="write run_log.jsonl, summary.json, and cost map dumps here")
    run_p.add_argument("--seed", type=int, default=None, metavar="N", help="override seeds: sim=N, optimizer=N+1, noise=N+2")
    run_p.add_argument("--backend", choices=("oracle", "replay", "live"), default=None, help="override backends.mode")
    run_p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario field by dotted path, e.g. --set planner.c_th=0.9 (repeatable)")

    replay_p = sub.add_parser("replay", help="recompute metrics from a run log")
    replay_p.add_argument("log", help="run_log.jsonl path")

    export_p = sub.add_parser("export", help="convert a run log to CSV")
    export_p.add_argument("log", help="run_log.jsonl path")
    export_p.add_argument("--csv", required=True, metavar="FILE", help="output CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "run":
            overrides = list(args.overrides)
            if args.backend is not None:
                overrides.append(f"backends.mode={args.backend}")
            if args.seed is not None:
                overrides += [
                    f"seeds.sim={args.seed}",
                    f"seeds.optimizer={args.seed + 1}",
                    f"seeds.noise={args.seed + 2}",
                ]
            scn = load_scenario(args.scenario, overrides)
            summary, _, _ = run_scenario(scn, out_dir=args.out)
            print(json.dumps(asdict(summary), indent=2, sort_keys=True))
        elif args.command == "replay":
            summary = replay_log(args.log)
            print(json.dumps(asdict(summary), indent=2, sort_keys=True))
        elif args.command == "export":
            n = export_csv(args.log, args.csv)
            print(f"wrote {n} rows to {args.csv}")
    except (InvalidScenario, CorruptLog) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BackendFailure as e:
        print(f"backend failure: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
