"""Per-replica performance metrics and their aggregation across replicas."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

N_FAILURES = 5

REPORT_COLUMNS = [
    "scenario_hash",
    "seed",
    "policy",
    "power_control",
    "v_max",
    "n_nodes",
    "n_sessions",
    "route_transitions",
    "hop_count",
    "delay_s",
    "energy_per_node_j",
    "energy_stddev_j",
    "first_failure_s",
    "rel2_s",
    "rel3_s",
    "rel4_s",
    "rel5_s",
    "packets_sent",
    "packets_delivered",
]
KEY_COLUMNS = REPORT_COLUMNS[:7]
METRIC_COLUMNS = REPORT_COLUMNS[7:]


def time_averaged_hop_count(segments: Iterable[tuple[int, float]]) -> float | None:
    """Hop count weighted by how long each route was in use; None if no route was ever used."""
    segments = list(segments)
    if not segments:
        return None
    if any(dur <= 0 for _, dur in segments):
        raise ValueError("segment durations must be positive")
    total = math.fsum(dur for _, dur in segments)
    return math.fsum(h * dur for h, dur in segments) / total


def fairness_stddev(per_node_energy: Sequence[float]) -> float:
    """Population standard deviation (divides by N)."""
    if len(per_node_energy) == 0:
        raise ValueError("need at least one node")
    n = len(per_node_energy)
    mean = math.fsum(per_node_energy) / n
    return math.sqrt(math.fsum((e - mean) ** 2 for e in per_node_energy) / n)


def failure_timeline(deaths: Sequence[float], required: int = N_FAILURES):
    """First failure time plus the next ``required - 1`` failures relative to it.

    Missing failures come back as None.
    """
    deaths = sorted(deaths)
    if not deaths:
        return None, [None] * (required - 1)
    first = deaths[0]
    rel = [deaths[k] - first if k < len(deaths) else None for k in range(1, required)]
    return first, rel


def route_transitions_avg(per_session_discoveries: Sequence[int]) -> float:
    if len(per_session_discoveries) == 0:
        raise ValueError("need at least one session")
    return math.fsum(per_session_discoveries) / len(per_session_discoveries)


def delay_avg(per_packet_delays: Sequence[float]) -> float | None:
    if len(per_packet_delays) == 0:
        return None
    return math.fsum(per_packet_delays) / len(per_packet_delays)


@dataclass
class MetricsReport:
    route_transitions_avg: float | None
    hop_count_time_avg: float | None
    delay_avg: float | None
    energy_per_node_avg: float
    energy_stddev: float
    first_failure_time: float | None
    failure_times_rel: list
    packets_sent: int = 0
    packets_delivered: int = 0
    discoveries: int = 0
    per_node_energy: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        assert self.energy_stddev >= 0
        assert self.packets_delivered <= self.packets_sent

    def row(self, scenario) -> dict:
        values = [
            self.route_transitions_avg,
            self.hop_count_time_avg,
            self.delay_avg,
            self.energy_per_node_avg,
            self.energy_stddev,
            self.first_failure_time,
            *self.failure_times_rel,
            self.packets_sent,
            self.packets_delivered,
        ]
        row = dict(zip(KEY_COLUMNS, scenario.key_values()))
        row.update(zip(METRIC_COLUMNS, values))
        return row


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path, rows: Iterable[dict], columns: Sequence[str] = REPORT_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])


def read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


AGGREGATE_KEYS = ["policy", "power_control", "v_max", "n_nodes", "n_sessions"]
AGGREGATE_COLUMNS = AGGREGATE_KEYS + ["replicas"] + METRIC_COLUMNS


def _num(s: str):
    return None if s == "" else float(s)


def aggregate(rows: Iterable[dict]) -> list[dict]:
    """Mean of every metric per grid cell, skipping blanks; sorted by cell."""
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(str(row[k]) for k in AGGREGATE_KEYS)
        cells.setdefault(key, []).append(row)
    out = []
    for key in sorted(cells, key=_cell_sort_key):
        members = cells[key]
        agg = dict(zip(AGGREGATE_KEYS, key))
        agg["replicas"] = len(members)
        for col in METRIC_COLUMNS:
            vals = [_num(r[col]) if isinstance(r[col], str) else r[col] for r in members]
            vals = [float(v) for v in vals if v is not None]
            agg[col] = math.fsum(vals) / len(vals) if vals else None
        out.append(agg)
    return out


def _cell_sort_key(key):
    policy, pc, v, n, s = key
    return (policy, pc, float(v), int(float(n)), int(float(s)))
