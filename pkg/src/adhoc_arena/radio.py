"""Transmit power, airtime, interference footprint and per-node energy accounting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

CATEGORIES = (
    "data_tx",
    "data_rx",
    "control_tx",
    "control_rx",
    "beacon_tx",
    "beacon_rx",
    "discovery_tx",
    "discovery_rx",
)
CATEGORY_INDEX = {name: k for k, name in enumerate(CATEGORIES)}

# Frame sizes in bytes. RTS goes out at full-range power; CTS and ACK at
# the hop's power when power control is on.
RTS_BYTES = 40
CTS_BYTES = 39
ACK_BYTES = 39
BEACON_BYTES = 64


class OutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class RadioConfig:
    range_m: float = 250.0
    fixed_tx_power: float = 1.4
    rx_power: float = 0.967
    circuit_power: float = 1.1182
    pathloss_coefficient: float = 7.2e-11
    bandwidth: float = 2e6
    power_control: bool = False

    def __post_init__(self):
        for name in ("range_m", "fixed_tx_power", "rx_power", "circuit_power", "pathloss_coefficient", "bandwidth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        full = self.circuit_power + self.pathloss_coefficient * self.range_m**4
        if full > self.fixed_tx_power + 1e-3:
            raise ValueError(
                f"controlled power at full range ({full:.5f} W) exceeds fixed power {self.fixed_tx_power} W"
            )


def tx_power(distance: float, config: RadioConfig) -> float:
    if distance < 0 or distance > config.range_m:
        raise OutOfRangeError(f"distance {distance} outside [0, {config.range_m}]")
    if not config.power_control:
        return config.fixed_tx_power
    return config.circuit_power + config.pathloss_coefficient * distance**4


def packet_airtime(nbytes: int, config: RadioConfig) -> float:
    if nbytes <= 0:
        raise ValueError("packet must be at least one byte")
    return nbytes * 8 / config.bandwidth


def interference_radius(hop_distance: float, config: RadioConfig) -> float:
    if hop_distance < 0 or hop_distance > config.range_m:
        raise OutOfRangeError(f"hop distance {hop_distance} outside [0, {config.range_m}]")
    return hop_distance if config.power_control else config.range_m


def handshake_airtime(payload_bytes: int, config: RadioConfig) -> float:
    """Channel time of one RTS/CTS/DATA/ACK exchange."""
    return packet_airtime(RTS_BYTES + CTS_BYTES + payload_bytes + ACK_BYTES, config)


class EnergyLedger:
    """Joule bookkeeping for every node of one replica.

    A debit larger than what is left drains the node to exactly zero and
    marks it dead, so ``initial - residual`` always equals the sum of the
    recorded debits.
    """

    def __init__(self, n_nodes: int, initial: float):
        if initial <= 0:
            raise ValueError("initial energy must be positive")
        self.initial = float(initial)
        self.residual = [float(initial)] * n_nodes
        self.debits = [[0.0] * len(CATEGORIES) for _ in range(n_nodes)]
        self.alive = [True] * n_nodes
        self.death_time: list[float | None] = [None] * n_nodes
        self.deaths: list[int] = []
        self.dead_debit_attempts = 0
        self.on_death = None

    def __len__(self):
        return len(self.residual)

    def debit(self, node: int, joules: float, category: int, now: float) -> bool:
        """Charge ``joules`` to ``node``; return True if this debit killed it."""
        if not self.alive[node]:
            self.dead_debit_attempts += 1
            return False
        left = self.residual[node]
        if joules < left:
            self.residual[node] = left - joules
            self.debits[node][category] += joules
            return False
        self.debits[node][category] += left
        self.residual[node] = 0.0
        self.alive[node] = False
        self.death_time[node] = now
        self.deaths.append(node)
        if self.on_death is not None:
            self.on_death(node, now)
        return True

    def consumed(self, node: int) -> float:
        return self.initial - self.residual[node]

    def category_total(self, node: int) -> float:
        return math.fsum(self.debits[node])

    def totals(self) -> dict[str, float]:
        return {name: math.fsum(row[k] for row in self.debits) for k, name in enumerate(CATEGORIES)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "residual_j"] + [f"{c}_j" for c in CATEGORIES] + ["death_time_s"])
            for i, res in enumerate(self.residual):
                death = self.death_time[i]
                w.writerow(
                    [i, repr(res)] + [repr(v) for v in self.debits[i]] + ["" if death is None else repr(death)]
                )


def debit_transmit(ledger: EnergyLedger, node: int, nbytes: int, distance: float, category: str,
                   config: RadioConfig, now: float = 0.0) -> bool:
    joules = tx_power(distance, config) * packet_airtime(nbytes, config)
    return ledger.debit(node, joules, CATEGORY_INDEX[category], now)


def debit_receive(ledger: EnergyLedger, node: int, nbytes: int, category: str,
                  config: RadioConfig, now: float = 0.0) -> bool:
    return ledger.debit(node, config.rx_power * packet_airtime(nbytes, config), CATEGORY_INDEX[category], now)
