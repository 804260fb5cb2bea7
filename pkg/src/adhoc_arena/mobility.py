"""Random Waypoint kinematics and link lifetime prediction."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
# Never-expiring links; compares above every finite lifetime.
INFINITE = math.inf


class NotNeighborsError(ValueError):
    """Raised when a lifetime is requested for nodes that are out of range."""


@dataclass(frozen=True)
class AreaConfig:
    width: float = 1000.0
    height: float = 1000.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"area must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class MobilityConfig:
    v_max: float = 5.0
    pause_time: float = 0.0

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if self.pause_time < 0:
            raise ValueError(f"pause_time must be >= 0, got {self.pause_time}")


@dataclass(frozen=True)
class NodeKinematics:
    position: tuple[float, float]
    speed: float
    heading: float
    current_waypoint: tuple[float, float]
    pause_until: float = 0.0
    time: float = 0.0

    @property
    def velocity(self) -> tuple[float, float]:
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)


def draw_speed(v_max: float, rng: np.random.Generator) -> float:
    # (0, v_max]: a zero speed with zero pause would freeze the node forever.
    return v_max * (1.0 - rng.random())


def draw_waypoint(area: AreaConfig, rng: np.random.Generator) -> tuple[float, float]:
    return float(rng.uniform(0.0, area.width)), float(rng.uniform(0.0, area.height))


def heading_to(x: float, y: float, wx: float, wy: float) -> float:
    if wx == x and wy == y:
        return 0.0
    return math.atan2(wy - y, wx - x) % TWO_PI


def random_start(area: AreaConfig, config: MobilityConfig, rng: np.random.Generator) -> NodeKinematics:
    """Uniform initial position with a first waypoint and speed already drawn."""
    x, y = draw_waypoint(area, rng)
    wx, wy = draw_waypoint(area, rng)
    speed = draw_speed(config.v_max, rng)
    return NodeKinematics((x, y), speed, heading_to(x, y, wx, wy), (wx, wy))


def advance(
    node: NodeKinematics,
    dt: float,
    config: MobilityConfig,
    area: AreaConfig,
    rng: np.random.Generator,
) -> NodeKinematics:
    """Move ``node`` forward by ``dt`` seconds under Random Waypoint.

    The node travels in a straight line toward its waypoint. On arrival it
    waits ``pause_time`` and then draws a fresh waypoint and speed from
    ``rng`` (waypoint x, waypoint y, speed, in that order).
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    if dt == 0:
        return node
    x, y = node.position
    wx, wy = node.current_waypoint
    speed, heading, pause_until = node.speed, node.heading, node.pause_until
    t = node.time
    end = t + dt
    while t < end:
        if t < pause_until:
            t = min(end, pause_until)
            continue
        if x == wx and y == wy:
            wx, wy = draw_waypoint(area, rng)
            speed = draw_speed(config.v_max, rng)
            heading = heading_to(x, y, wx, wy)
            continue
        dist = math.hypot(wx - x, wy - y)
        travel = dist / speed
        if t + travel <= end:
            x, y = wx, wy
            t += travel
            pause_until = t + config.pause_time
        else:
            frac = (end - t) * speed / dist
            x += (wx - x) * frac
            y += (wy - y) * frac
            t = end
    return replace(
        node,
        position=(x, y),
        speed=speed,
        heading=heading,
        current_waypoint=(wx, wy),
        pause_until=pause_until,
        time=end,
    )


def lifetime_from_relative(
    dx: float, dy: float, dvx: float, dvy: float, r: float
) -> float:
    """Remaining time a pair stays within ``r``, from relative position/velocity.

    ``dx, dy`` is position of i minus position of j; ``dvx, dvy`` the
    velocity difference in the same order.
    """
    a, b, c, d = dvx, dx, dvy, dy
    if b * b + d * d > r * r:
        raise NotNeighborsError(f"distance {math.hypot(b, d):.6g} exceeds range {r}")
    speed2 = a * a + c * c
    if speed2 == 0.0:
        return INFINITE
    cross = a * d - b * c
    disc = speed2 * r * r - cross * cross
    # Rounding noise only: the in-range precondition guarantees disc >= 0.
    assert disc >= -1e-9 * speed2 * r * r, f"negative discriminant {disc}"
    root = math.sqrt(disc) if disc > 0.0 else 0.0
    return max(0.0, (-(a * b + c * d) + root) / speed2)


def link_expiration_time(i: NodeKinematics, j: NodeKinematics, r: float) -> float:
    vix, viy = i.velocity
    vjx, vjy = j.velocity
    return lifetime_from_relative(
        i.position[0] - j.position[0],
        i.position[1] - j.position[1],
        vix - vjx,
        viy - vjy,
        r,
    )


def route_expiration_time(lets: Sequence[float]) -> float:
    if len(lets) == 0:
        raise ValueError("route_expiration_time needs at least one link")
    return min(lets)


class Mover:
    """Piecewise-linear trajectories for a whole network.

    Each node owns its own random stream, so trajectories do not depend on
    the order in which the simulator asks for waypoint updates. A leg is the
    straight segment (or pause) ``[t0, t_end)``; ``position`` is exact
    anywhere inside the current leg.
    """

    def __init__(self, n: int, area: AreaConfig, config: MobilityConfig, rngs: Sequence[np.random.Generator]):
        if len(rngs) != n:
            raise ValueError("need one random stream per node")
        self._alloc(n, area, config, rngs)
        for i in range(n):
            k = random_start(area, config, self.rngs[i])
            self.x0[i], self.y0[i] = k.position
            self._start_leg(i, 0.0, k.current_waypoint, k.speed)

    def _alloc(self, n, area, config, rngs) -> None:
        self.area = area
        self.config = config
        self.rngs = list(rngs)
        self.n = n
        self.x0 = [0.0] * n
        self.y0 = [0.0] * n
        self.t0 = [0.0] * n
        self.vx = [0.0] * n
        self.vy = [0.0] * n
        self.t_end = [0.0] * n
        self.wx = [0.0] * n
        self.wy = [0.0] * n
        self.speed = [0.0] * n
        self.pausing = [False] * n
        # Array mirrors of the leg state for vectorised position queries.
        self.ax0 = np.zeros(n)
        self.ay0 = np.zeros(n)
        self.at0 = np.zeros(n)
        self.avx = np.zeros(n)
        self.avy = np.zeros(n)

    @classmethod
    def linear(cls, positions, velocities=None, area: AreaConfig | None = None) -> "Mover":
        """Nodes on endless straight lines (no waypoints), for scripted scenarios.

        ``velocities`` defaults to all zero, i.e. a static topology.
        """
        n = len(positions)
        velocities = velocities if velocities is not None else [(0.0, 0.0)] * n
        if len(velocities) != n:
            raise ValueError("need one velocity per node")
        self = cls.__new__(cls)
        self._alloc(n, area or AreaConfig(), MobilityConfig(), [None] * n)
        for i, ((x, y), (vx, vy)) in enumerate(zip(positions, velocities)):
            self.x0[i], self.y0[i] = float(x), float(y)
            self.vx[i], self.vy[i] = float(vx), float(vy)
            self.speed[i] = math.hypot(vx, vy)
            self.wx[i], self.wy[i] = self.x0[i], self.y0[i]
            self.t_end[i] = INFINITE
            self._sync(i)
        return self

    def _start_leg(self, i: int, t: float, waypoint: tuple[float, float], speed: float) -> None:
        x, y = self.x0[i], self.y0[i]
        wx, wy = waypoint
        dist = math.hypot(wx - x, wy - y)
        self.t0[i] = t
        self.wx[i], self.wy[i] = wx, wy
        self.speed[i] = speed
        self.pausing[i] = False
        if dist == 0.0:
            self.vx[i] = self.vy[i] = 0.0
            self.t_end[i] = t
        else:
            self.vx[i] = speed * (wx - x) / dist
            self.vy[i] = speed * (wy - y) / dist
            self.t_end[i] = t + dist / speed
        self._sync(i)

    def _sync(self, i: int) -> None:
        self.ax0[i] = self.x0[i]
        self.ay0[i] = self.y0[i]
        self.at0[i] = self.t0[i]
        self.avx[i] = self.vx[i]
        self.avy[i] = self.vy[i]

    def position(self, i: int, t: float) -> tuple[float, float]:
        dt = t - self.t0[i]
        return self.x0[i] + self.vx[i] * dt, self.y0[i] + self.vy[i] * dt

    def positions(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        dt = t - self.at0
        return self.ax0 + self.avx * dt, self.ay0 + self.avy * dt

    def kinematics(self, i: int, t: float) -> NodeKinematics:
        x, y = self.position(i, t)
        vx, vy = self.vx[i], self.vy[i]
        speed = math.hypot(vx, vy)
        heading = math.atan2(vy, vx) % TWO_PI if speed > 0 else 0.0
        return NodeKinematics((x, y), speed, heading, (self.wx[i], self.wy[i]), time=t)

    def end_leg(self, i: int) -> float:
        """Finish node ``i``'s current leg; return the end time of the next one."""
        t = self.t_end[i]
        if not self.pausing[i]:
            self.x0[i], self.y0[i] = self.wx[i], self.wy[i]
            self.t0[i] = t
            self.vx[i] = self.vy[i] = 0.0
            if self.config.pause_time > 0:
                self.pausing[i] = True
                self.t_end[i] = t + self.config.pause_time
                self._sync(i)
                return self.t_end[i]
        wx, wy = draw_waypoint(self.area, self.rngs[i])
        speed = draw_speed(self.config.v_max, self.rngs[i])
        self._start_leg(i, t, (wx, wy), speed)
        return self.t_end[i]


def write_trace(path, records: Iterable[tuple[float, int, float, float, float]]) -> None:
    """Write waypoint events as ``time_s,node_id,x_m,y_m,speed_mps`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "node_id", "x_m", "y_m", "speed_mps"])
        for t, node, x, y, speed in records:
            w.writerow([repr(float(t)), node, repr(float(x)), repr(float(y)), repr(float(speed))])
