"""Replica fan-out, resumable per-replica CSV and cell aggregation."""

from __future__ import annotations

import csv
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .config import Scenario
from .engine import run as run_replica_sim
from .metrics import AGGREGATE_COLUMNS, REPORT_COLUMNS, aggregate, format_value, write_rows

log = logging.getLogger(__name__)

REPLICAS_FILE = "replicas.csv"
FAILURES_FILE = "failures.csv"
AGGREGATE_FILE = "aggregate.csv"
FAILURE_COLUMNS = ["scenario_hash", "seed", "policy", "error"]


def run_replica(scenario: Scenario) -> dict:
    """Run one replica and return its report row, every value already formatted."""
    report = run_replica_sim(scenario)
    return {k: format_value(v) for k, v in report.row(scenario).items()}


def _safe_run(scenario: Scenario):
    try:
        return scenario, run_replica(scenario), None
    except Exception as exc:  # recorded per replica, never fatal for the sweep
        return scenario, None, "".join(traceback.format_exception_only(type(exc), exc)).strip()


def replica_key(row: dict) -> tuple[str, str]:
    return row["scenario_hash"], str(row["seed"])


def row_sort_key(row: dict):
    return (
        row["policy"],
        row["power_control"],
        float(row["v_max"]),
        int(float(row["n_nodes"])),
        int(float(row["n_sessions"])),
        int(row["seed"]),
        row["scenario_hash"],
    )


def _read_completed(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"{path} does not have the replica report header")
        # A row cut short by an interrupt has missing fields; drop it so it reruns.
        return [row for row in reader if None not in row.values()]


@dataclass
class SweepOutcome:
    rows: list[dict]
    failures: list[dict] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)
    skipped: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures


def run_sweep(
    scenarios: Sequence[Scenario],
    out_dir,
    jobs: int | None = None,
    resume: bool = False,
    progress: Callable[[int, int], None] | None = None,
) -> SweepOutcome:
    """Run every scenario, skipping rows already present when ``resume`` is set.

    Rows are appended to ``replicas.csv`` as they finish so an interrupted
    sweep can pick up where it stopped. Once everything has run the file is
    rewritten in canonical order, so its bytes (and the aggregate) do not
    depend on ``jobs`` or on completion order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    replicas_path = out / REPLICAS_FILE
    done = _read_completed(replicas_path) if resume else []
    done_keys = {replica_key(r) for r in done}
    todo = [s for s in scenarios if (s.scenario_hash(), str(s.seed)) not in done_keys]
    skipped = len(scenarios) - len(todo)
    if skipped:
        log.info("resuming: %d of %d replicas already complete", skipped, len(scenarios))

    # Rewrite what survived so a truncated trailing line is gone before appending.
    write_rows(replicas_path, done)
    rows = list(done)
    failures = []
    jobs = jobs or os.cpu_count() or 1
    with open(replicas_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")

        def collect(result, finished):
            scenario, row, error = result
            if error is None:
                rows.append(row)
                writer.writerow([row[c] for c in REPORT_COLUMNS])
                fh.flush()
            else:
                log.warning("replica %s seed %d failed: %s", scenario.scenario_hash(), scenario.seed, error)
                failures.append({
                    "scenario_hash": scenario.scenario_hash(),
                    "seed": scenario.seed,
                    "policy": scenario.policy.value,
                    "error": error,
                })
            if progress is not None:
                progress(finished, len(todo))

        if jobs == 1 or len(todo) <= 1:
            for k, s in enumerate(todo, 1):
                collect(_safe_run(s), k)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_safe_run, s) for s in todo]
                for k, fut in enumerate(as_completed(futures), 1):
                    collect(fut.result(), k)

    rows.sort(key=row_sort_key)
    write_rows(replicas_path, rows)
    failures.sort(key=lambda f: (f["scenario_hash"], int(f["seed"])))
    write_rows(out / FAILURES_FILE, failures, FAILURE_COLUMNS)
    agg = aggregate(rows)
    write_rows(out / AGGREGATE_FILE, agg, AGGREGATE_COLUMNS)
    return SweepOutcome(rows, failures, agg, skipped)
