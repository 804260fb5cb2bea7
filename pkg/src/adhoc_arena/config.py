"""Scenario and sweep-grid definitions plus the ``key = value`` file format."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, fields, replace

from .mobility import AreaConfig, MobilityConfig
from .radio import RadioConfig
from .routing import Policy


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _parse_policy(text: str) -> Policy:
    return Policy(text.strip().lower())


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


@dataclass(frozen=True)
class Scenario:
    n_nodes: int = 50
    area_w_m: float = 1000.0
    area_h_m: float = 1000.0
    range_m: float = 250.0
    power_control: bool = False
    policy: Policy = Policy.FORP
    v_max_mps: float = 5.0
    pause_s: float = 0.0
    n_sessions: int = 15
    rate_pps: float = 4.0
    payload_bytes: int = 512
    initial_energy_j: float = 1500.0
    horizon_s: float | None = 1000.0
    stop_after_failures: int | None = None
    seed: int = 1
    bandwidth_bps: float = 2e6
    topology_dt_s: float = 0.1
    reply_window_s: float = 0.05

    def __post_init__(self):
        if (self.horizon_s is None) == (self.stop_after_failures is None):
            raise ConfigError("horizon_s", "exactly one of horizon_s and stop_after_failures must be set")
        if self.horizon_s is not None and self.horizon_s <= 0:
            raise ConfigError("horizon_s", "must be positive")
        if self.stop_after_failures is not None and not 1 <= self.stop_after_failures <= self.n_nodes:
            raise ConfigError("stop_after_failures", "must be between 1 and n_nodes")
        if self.n_nodes < 2:
            raise ConfigError("n_nodes", "need at least two nodes")
        if self.n_sessions < 0 or self.n_sessions > 2 * self.n_nodes:
            raise ConfigError("n_sessions", "must be between 0 and 2 * n_nodes")
        for key in ("area_w_m", "area_h_m", "range_m", "v_max_mps", "rate_pps", "initial_energy_j",
                    "bandwidth_bps", "topology_dt_s", "reply_window_s"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.payload_bytes <= 0:
            raise ConfigError("payload_bytes", "must be positive")
        if self.pause_s < 0:
            raise ConfigError("pause_s", "must be >= 0")

    def area(self) -> AreaConfig:
        return AreaConfig(self.area_w_m, self.area_h_m)

    def mobility(self) -> MobilityConfig:
        return MobilityConfig(self.v_max_mps, self.pause_s)

    def radio(self) -> RadioConfig:
        return RadioConfig(range_m=self.range_m, bandwidth=self.bandwidth_bps, power_control=self.power_control)

    def to_text(self, include_seed: bool = True) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or (f.name == "seed" and not include_seed):
                continue
            lines.append(f"{f.name} = {_format(value)}")
        return "\n".join(lines) + "\n"

    def scenario_hash(self) -> str:
        return hashlib.sha256(self.to_text(include_seed=False).encode()).hexdigest()[:12]

    def key_values(self) -> tuple:
        return (
            self.scenario_hash(),
            self.seed,
            self.policy.value,
            self.power_control,
            self.v_max_mps,
            self.n_nodes,
            self.n_sessions,
        )


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Policy):
        return value.value
    return str(value)


PARSERS = {
    "n_nodes": _parse_int,
    "area_w_m": _parse_float,
    "area_h_m": _parse_float,
    "range_m": _parse_float,
    "power_control": _parse_bool,
    "policy": _parse_policy,
    "v_max_mps": _parse_float,
    "pause_s": _parse_float,
    "n_sessions": _parse_int,
    "rate_pps": _parse_float,
    "payload_bytes": _parse_int,
    "initial_energy_j": _parse_float,
    "horizon_s": _parse_float,
    "stop_after_failures": _parse_int,
    "seed": _parse_int,
    "bandwidth_bps": _parse_float,
    "topology_dt_s": _parse_float,
    "reply_window_s": _parse_float,
}


def read_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line.split()[0], f"line {lineno} is not of the form key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(key, "given more than once")
        seen.add(key)
        pairs.append((key, value))
    return pairs


def _apply_stop_condition(values: dict) -> dict:
    # A file naming only stop_after_failures switches off the default horizon.
    if "stop_after_failures" in values and "horizon_s" not in values:
        values["horizon_s"] = None
    return values


def parse_scenario(text: str) -> Scenario:
    values = {}
    for key, raw in read_pairs(text):
        if key not in PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            values[key] = PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    return Scenario(**_apply_stop_condition(values))


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


@dataclass(frozen=True)
class SweepGrid:
    """A product of list-valued scenario keys, each cell run ``replicas`` times."""

    axes: dict
    fixed: dict
    replicas: int = 25
    master_seed: int = 1

    def cells(self) -> list[Scenario]:
        names = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[k] for k in names)):
            values = dict(self.fixed)
            values.update(zip(names, combo))
            values.pop("seed", None)
            out.append(Scenario(**_apply_stop_condition(values), seed=0))
        return out

    def replica_seed(self, cell: Scenario, index: int) -> int:
        """Seed shared by every cell with the same node count at this replica index.

        Policies, power-control settings, speeds and session counts are
        therefore compared on common random numbers.
        """
        digest = hashlib.sha256(f"{self.master_seed}:{cell.n_nodes}:{index}".encode()).digest()
        return int.from_bytes(digest[:4], "big")

    def scenarios(self) -> list[Scenario]:
        return [replace(cell, seed=self.replica_seed(cell, r)) for cell in self.cells() for r in range(self.replicas)]

    def __len__(self):
        return len(self.cells()) * self.replicas


def parse_grid(text: str) -> SweepGrid:
    axes, fixed = {}, {}
    replicas, master = 25, 1
    for key, raw in read_pairs(text):
        if key == "replicas":
            try:
                replicas = int(raw)
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
            if replicas < 1:
                raise ConfigError(key, "must be >= 1")
            continue
        if key not in PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            items = [PARSERS[key](part) for part in raw.split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
        if not items:
            raise ConfigError(key, "no values given")
        if key == "seed":
            if len(items) != 1:
                raise ConfigError(key, "the master seed takes a single value")
            master = items[0]
        elif len(items) == 1:
            fixed[key] = items[0]
        else:
            axes[key] = items
    grid = SweepGrid(axes, fixed, replicas, master)
    grid.cells()  # validate every combination up front
    return grid


def load_grid(path) -> SweepGrid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read())
