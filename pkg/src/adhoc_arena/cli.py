"""``adhoc-arena`` command line: run one replica, sweep a grid, plot aggregates."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, load_grid, load_scenario
from .engine import Simulator
from .metrics import format_value, write_rows
from .mobility import write_trace
from .plotting import EmptyDataError, plot_aggregate
from .sweep import run_sweep
from .traffic import write_sessions

SEED_ENV = "ADHOC_ARENA_SEED"
EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("adhoc_arena")


def _seed_override() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"not an integer: {raw!r}") from None


def cmd_run(args) -> int:
    scenario = load_scenario(args.file)
    seed = _seed_override()
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim = Simulator(scenario, record_routes=True, record_trace=args.trace)
    report = sim.run()
    write_rows(out / "report.csv", [report.row(scenario)])
    sim.ledger.write_csv(out / "energy.csv")
    write_sessions(out / "sessions.csv", [s.spec for s in sim.sessions])
    with open(out / "routes.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "session_id", "event", "path", "metric"])
        for t, sid, event, path, metric in sim.route_log:
            w.writerow([repr(t), sid, event, path, format_value(float(metric))])
    if args.trace:
        write_trace(out / "trace.csv", sim.trace)
    log.info("replica %s seed %d done: %d/%d packets delivered",
             scenario.scenario_hash(), scenario.seed, report.packets_delivered, report.packets_sent)
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = load_grid(args.file)
    seed = _seed_override()
    if seed is not None:
        grid = dataclasses.replace(grid, master_seed=seed)
    scenarios = grid.scenarios()
    log.info("%d cells x %d replicas = %d runs", len(grid.cells()), grid.replicas, len(scenarios))

    def progress(done, total):
        if done == total or done % 10 == 0:
            log.info("%d/%d replicas finished", done, total)

    outcome = run_sweep(scenarios, args.out, jobs=args.jobs, resume=args.resume, progress=progress)
    if outcome.failures:
        log.error("%d replicas failed; see %s", len(outcome.failures), Path(args.out) / "failures.csv")
        return EXIT_FAILED
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        result = plot_aggregate(args.csv, args.out)
    except EmptyDataError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    log.info("wrote %d panels to %s", len(result.panels), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adhoc-arena", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one replica from a scenario file")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true", help="also write the waypoint trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every replica of a grid file")
    p.add_argument("file")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    p.add_argument("--resume", action="store_true", help="skip replicas already in replicas.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="write plot scripts, data files and PNGs from an aggregate CSV")
    p.add_argument("csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        log.error("--jobs must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
