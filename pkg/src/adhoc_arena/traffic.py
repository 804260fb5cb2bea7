"""Constant-bit-rate session generation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

MAX_ROLE = 2
START_WINDOW = (1.0, 20.0)


@dataclass(frozen=True)
class SessionSpec:
    id: int
    source: int
    dest: int
    start: float
    rate: float = 4.0
    payload: int = 512

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError("session source and destination must differ")
        if self.rate <= 0 or self.payload <= 0:
            raise ValueError("rate and payload must be positive")


def generate_sessions(
    n_nodes: int,
    n_sessions: int,
    rng: np.random.Generator,
    rate: float = 4.0,
    payload: int = 512,
) -> list[SessionSpec]:
    """Draw sessions one at a time, each uniform over the still-admissible pairs.

    No node sources more than two sessions or sinks more than two, and no
    (source, dest) pair repeats. Session k depends only on the role counters
    left by sessions before it, so the first k sessions of a larger draw
    equal a k-session draw from the same stream.
    """
    if n_sessions < 0:
        raise ValueError("n_sessions must be >= 0")
    if n_nodes < 2 or n_sessions > MAX_ROLE * n_nodes:
        raise ValueError(f"cannot place {n_sessions} sessions on {n_nodes} nodes")
    as_source = [0] * n_nodes
    as_dest = [0] * n_nodes
    used: set[tuple[int, int]] = set()
    sessions = []
    def admissible(s, d):
        return s != d and as_source[s] < MAX_ROLE and as_dest[d] < MAX_ROLE and (s, d) not in used

    for k in range(n_sessions):
        # Rejection sampling is uniform over admissible pairs; enumerate
        # only when the admissible set has become sparse.
        for _ in range(64):
            s, d = (int(v) for v in rng.integers(n_nodes, size=2))
            if admissible(s, d):
                break
        else:
            pairs = [(s, d) for s in range(n_nodes) for d in range(n_nodes) if admissible(s, d)]
            if not pairs:
                raise ValueError(f"role constraints leave no pair for session {k}")
            s, d = pairs[int(rng.integers(len(pairs)))]
        start = float(rng.uniform(*START_WINDOW))
        as_source[s] += 1
        as_dest[d] += 1
        used.add((s, d))
        sessions.append(SessionSpec(k, s, d, start, rate, payload))
    return sessions


def emission_times(spec: SessionSpec, horizon: float) -> list[float]:
    if horizon < spec.start:
        return []
    interval = 1.0 / spec.rate
    count = math.floor((horizon - spec.start) * spec.rate + 1e-9) + 1
    return [spec.start + k * interval for k in range(count)]


def write_sessions(path, sessions) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id", "source", "dest", "start_s"])
        for s in sessions:
            w.writerow([s.id, s.source, s.dest, repr(s.start)])
