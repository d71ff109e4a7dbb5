"""Command line entry point: ``glidepool validate|run|catalogue``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from .engine import EventLog, catalogue_csv, gpu_catalogue, parse_config, run

EXIT_OK = 0
EXIT_INVALID = 2


def _load(path: str):
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except OSError as exc:
        return None, [f"$: cannot read {p}: {exc.strerror}"]
    except json.JSONDecodeError as exc:
        return None, [f"$: invalid JSON ({exc})"]
    return parse_config(data, base_dir=p.parent)


def cmd_validate(args) -> int:
    config, errors = _load(args.config)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    print(f"ok: {len(config.sites)} sites, {len(config.nodes)} nodes, "
          f"{len(config.entries)} entries, {sum(g.count for g in config.workload)} jobs")
    return EXIT_OK


def cmd_run(args) -> int:
    config, errors = _load(args.config)
    if errors:
        for e in errors:
            print(e, file=sys.stderr)
        return EXIT_INVALID
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log, metrics = run(config, until=args.until)
    log.write(out / "events.jsonl")
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    rows = gpu_catalogue(log)
    (out / "catalogue.csv").write_text(catalogue_csv(rows))
    figures = []
    if not args.no_figures:
        from .report import render_figures
        end = config.duration_secs if args.until is None else args.until
        figures = render_figures(log, rows, out, end)

    print("--- metrics ---")
    for k, v in metrics.to_dict().items():
        print(f"{k}: {v}")
    print("--- outputs ---")
    for p in ["events.jsonl", "metrics.json", "catalogue.csv"] + [f.name for f in figures]:
        print(out / p)
    return EXIT_OK


def cmd_catalogue(args) -> int:
    try:
        log = EventLog.read(args.events)
    except (OSError, ValueError, KeyError) as exc:
        print(f"cannot read event log: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(catalogue_csv(gpu_catalogue(log)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glidepool",
                                 description="Two-stage pilot provisioning and matchmaking simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a scenario")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="overrides the seed in the file")
    p.add_argument("--out", required=True)
    p.add_argument("--until", type=int, default=None, help="stop time in seconds")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("catalogue", help="GPU catalogue CSV from an event log")
    p.add_argument("events")
    p.set_defaults(func=cmd_catalogue)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
