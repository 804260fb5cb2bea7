"""Deterministic discrete-event simulation of one replica.

Mobility, beaconing, route discovery and data forwarding share a single
event heap ordered by ``(time, insertion order)``. Medium access is an
abstract, loss-free contention model: a frame holds the channel for its
airtime and every node inside the interference footprint of its sender or
receiver defers (head-of-line blocking) until it ends.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import radio as rd
from .config import Scenario
from .metrics import (
    MetricsReport,
    delay_avg,
    failure_timeline,
    fairness_stddev,
    route_transitions_avg,
    time_averaged_hop_count,
)
from .mobility import Mover, NotNeighborsError, lifetime_from_relative
from .routing import (
    DELIVER,
    FORWARD,
    BeaconRecord,
    NodeRoutingState,
    Policy,
    Route,
    RouteReply,
    RouteRequest,
    handle_rreq,
    install_route,
    select_route,
    teardown_route,
    traffic_interference,
)
from .traffic import SessionSpec, generate_sessions

# Event kinds, in the order handlers are registered.
MOBILITY_STEP, BEACON_TICK, PACKET_EMIT, FRAME_END, DISCOVERY_TIMEOUT, REPLY_WINDOW_CLOSE, SESSION_START, TOPOLOGY = range(8)

KIND_DATA, KIND_RREQ, KIND_RREP, KIND_RERR = range(4)
BROADCAST = -1

RREQ_BASE_BYTES = 32
RREP_BASE_BYTES = 32
PATH_ENTRY_BYTES = 8
RERR_BYTES = 32

BEACON_INTERVAL = 1.0
MISSED_BEACONS = 3
DISCOVERY_TIMEOUT_S = 1.0
DISCOVERY_TIMEOUT_CAP_S = 8.0
RERR_FALLBACK_S = 1.0
SOURCE_BUFFER = 64
# Upper bound on simulated time when running until a number of node failures.
FAILURE_MODE_TIME_CAP = 50_000.0

STREAM_MOBILITY, STREAM_SESSIONS = 0, 1

_CAT = rd.CATEGORY_INDEX
CTL_TX, CTL_RX = _CAT["control_tx"], _CAT["control_rx"]
_FRAME_CATEGORIES = {
    KIND_DATA: (_CAT["data_tx"], _CAT["data_rx"]),
    KIND_RREQ: (_CAT["discovery_tx"], _CAT["discovery_rx"]),
    KIND_RREP: (_CAT["discovery_tx"], _CAT["discovery_rx"]),
    KIND_RERR: (_CAT["discovery_tx"], _CAT["discovery_rx"]),
}


def substream(seed: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(stream,))


def make_mover(scenario: Scenario) -> Mover:
    rngs = [np.random.default_rng(s) for s in substream(scenario.seed, STREAM_MOBILITY).spawn(scenario.n_nodes)]
    return Mover(scenario.n_nodes, scenario.area(), scenario.mobility(), rngs)


def make_sessions(scenario: Scenario) -> list[SessionSpec]:
    rng = np.random.default_rng(substream(scenario.seed, STREAM_SESSIONS))
    return generate_sessions(scenario.n_nodes, scenario.n_sessions, rng, scenario.rate_pps, scenario.payload_bytes)


@dataclass(frozen=True)
class TopologyView:
    neighbors: tuple[frozenset, ...]
    time: float


class Frame:
    __slots__ = ("src", "dst", "nbytes", "kind", "payload", "enq", "r2", "sx", "sy", "tx", "ty", "dist", "receivers",
                 "started", "blocked", "end")

    def __init__(self, src, dst, nbytes, kind, payload, enq):
        self.src = src
        self.dst = dst
        self.nbytes = nbytes
        self.kind = kind
        self.payload = payload
        self.enq = enq
        self.started = None


class Packet:
    __slots__ = ("session", "created", "route", "idx")

    def __init__(self, session, created):
        self.session = session
        self.created = created
        self.route = None
        self.idx = 0


class SessionState:
    __slots__ = ("spec", "route", "active", "discovering", "seq", "attempt", "buffer", "discoveries",
                 "segments", "awaiting_rerr", "emitted", "rerr_token")

    def __init__(self, spec: SessionSpec):
        self.spec = spec
        self.route: Route | None = None
        self.active = False
        self.discovering = False
        self.seq = 0
        self.attempt = 0
        self.buffer = deque(maxlen=SOURCE_BUFFER)
        self.discoveries = 0
        self.segments: list[tuple[int, float]] = []
        self.awaiting_rerr = False
        self.emitted = 0
        self.rerr_token = 0


class Simulator:
    """One replica. Build it, call :meth:`run`, then read the outputs."""

    def __init__(self, scenario: Scenario, sessions=None, mover=None, record_routes=False, record_trace=False):
        self.scenario = sc = scenario
        self.policy = sc.policy
        self.radio = sc.radio()
        self.n = n = sc.n_nodes
        self.range = sc.range_m
        self.range2 = sc.range_m**2
        self.mover = mover if mover is not None else make_mover(sc)
        specs = make_sessions(sc) if sessions is None else list(sessions)
        self.sessions = [SessionState(s) for s in specs]
        self.by_pair = {(s.spec.source, s.spec.dest): s for s in self.sessions}
        self.ledger = rd.EnergyLedger(n, sc.initial_energy_j)
        self.ledger.on_death = self._on_death
        self.alive = self.ledger.alive
        self.states = [NodeRoutingState() for _ in range(n)]
        self.src_seq = [0] * n
        self.windows: dict[tuple, list] = {}
        self.closed_windows: set[tuple] = set()

        self.queues = [deque() for _ in range(n)]
        self.busy = [False] * n
        self.inflight: list[Frame] = []
        self.waiting: dict[int, float] = {}
        self._pending: list[int] = []
        self._batch = False
        self._last_blocker = None
        self._started = False

        self.heap: list = []
        self._order = 0
        self.now = 0.0
        self.stopped = False
        if sc.horizon_s is not None:
            self.end_time = sc.horizon_s
        else:
            self.end_time = FAILURE_MODE_TIME_CAP
        self.finished_at = None

        self.delays: list[float] = []
        self.packets_sent = 0
        self.packets_delivered = 0
        self.route_log: list | None = [] if record_routes else None
        self.trace: list | None = [] if record_trace else None
        self.event_times: list | None = None
        self.counters = dict.fromkeys(
            ["beacons_sent", "beacon_receptions", "rreq_tx", "rrep_tx", "rerr_tx", "data_frames",
             "discovery_attempts", "mac_failures", "buffer_drops", "rreq_receptions"], 0)

        # Per-frame energy constants.
        rc = self.radio
        self.air_rts = rd.packet_airtime(rd.RTS_BYTES, rc)
        self.air_cts = rd.packet_airtime(rd.CTS_BYTES, rc)
        self.air_ack = rd.packet_airtime(rd.ACK_BYTES, rc)
        self.handshake_bytes = rd.RTS_BYTES + rd.CTS_BYTES + rd.ACK_BYTES
        self.bit_time = 8.0 / rc.bandwidth
        self.power_control = rc.power_control
        self.rx_power = rc.rx_power
        self.air_ctsack = self.air_cts + self.air_ack
        self.e_rts_tx = rc.fixed_tx_power * self.air_rts
        self.e_rts_rx = rc.rx_power * self.air_rts
        self.e_ctsack_rx = rc.rx_power * self.air_ctsack
        self._alive_arr = np.ones(n, dtype=bool)

        self._handlers = [
            self._on_mobility,
            self._on_beacon,
            self._on_emit,
            self._on_frame_end,
            self._on_discovery_timeout,
            self._on_window_close,
            self._on_session_start,
            self._on_topology,
        ]

    # -- event plumbing ---------------------------------------------------

    def schedule(self, t: float, kind: int, arg=None) -> None:
        assert t >= self.now, "event scheduled in the past"
        self._order += 1
        heapq.heappush(self.heap, (t, self._order, kind, arg))

    def start(self) -> None:
        """Queue the initial events. Called once, implicitly by advance/run."""
        if self._started:
            return
        self._started = True
        m = self.mover
        for i in range(self.n):
            if m.t_end[i] <= self.end_time:
                self.schedule(m.t_end[i], MOBILITY_STEP, i)
            if self.trace is not None:
                self.trace.append((0.0, i, m.x0[i], m.y0[i], m.speed[i]))
        self.schedule(0.0, BEACON_TICK, 0)
        self.schedule(self.scenario.topology_dt_s, TOPOLOGY, 1)
        for s in self.sessions:
            if s.spec.start <= self.end_time:
                self.schedule(s.spec.start, SESSION_START, s)

    def advance(self, until: float) -> None:
        """Process every event at or before ``until`` (capped at the end time)."""
        self.start()
        heap = self.heap
        handlers = self._handlers
        end = min(until, self.end_time)
        times = self.event_times
        while heap and not self.stopped:
            if heap[0][0] > end:
                break
            t, _, kind, arg = heapq.heappop(heap)
            self.now = t
            if times is not None:
                times.append(t)
            handlers[kind](arg)

    def run(self) -> MetricsReport:
        self.advance(self.end_time)
        if self.finished_at is None:
            self.finished_at = self.end_time if not self.stopped else self.now
        return self.report()

    # -- mobility and topology ----------------------------------------------

    def _on_mobility(self, i: int) -> None:
        m = self.mover
        t_next = m.end_leg(i)
        if self.trace is not None and not m.pausing[i]:
            self.trace.append((self.now, i, m.x0[i], m.y0[i], m.speed[i]))
        if t_next <= self.end_time:
            self.schedule(t_next, MOBILITY_STEP, i)

    def position(self, i: int, t: float | None = None) -> tuple[float, float]:
        return self.mover.position(i, self.now if t is None else t)

    def distance(self, i: int, j: int) -> float:
        xi, yi = self.position(i)
        xj, yj = self.position(j)
        return math.hypot(xi - xj, yi - yj)

    def topology_refresh(self, t: float | None = None) -> TopologyView:
        t = self.now if t is None else t
        X, Y = self.mover.positions(t)
        alive = np.asarray(self.alive)
        mask = ((X[:, None] - X[None, :]) ** 2 + (Y[:, None] - Y[None, :]) ** 2 <= self.range2)
        mask &= alive[:, None] & alive[None, :]
        np.fill_diagonal(mask, False)
        return TopologyView(tuple(frozenset(np.flatnonzero(row).tolist()) for row in mask), t)

    def _in_range(self, u: int, v: int) -> bool:
        m = self.mover
        t = self.now
        dx = m.x0[u] + m.vx[u] * (t - m.t0[u]) - m.x0[v] - m.vx[v] * (t - m.t0[v])
        dy = m.y0[u] + m.vy[u] * (t - m.t0[u]) - m.y0[v] - m.vy[v] * (t - m.t0[v])
        return dx * dx + dy * dy <= self.range2

    def _on_topology(self, k: int) -> None:
        alive = self.alive
        for s in self.sessions:
            route = s.route
            if route is None:
                continue
            path = route.path
            for idx in range(len(path) - 1):
                u, v = path[idx], path[idx + 1]
                if not alive[v] or not self._in_range(u, v):
                    self.handle_link_break(s, route, idx)
                    break
        t_next = (k + 1) * self.scenario.topology_dt_s
        if t_next <= self.end_time:
            self.schedule(t_next, TOPOLOGY, k + 1)

    # -- beacons -----------------------------------------------------------------

    def _on_beacon(self, k: int) -> None:
        t = self.now
        m = self.mover
        X, Y = m.positions(t)
        alive_list = self.alive
        alive = np.asarray(alive_list)
        mask = ((X[:, None] - X[None, :]) ** 2 + (Y[:, None] - Y[None, :]) ** 2 <= self.range2)
        mask &= alive[:, None] & alive[None, :]
        np.fill_diagonal(mask, False)
        stale = t - (MISSED_BEACONS - 0.5) * BEACON_INTERVAL
        for st in self.states:
            nb = st.neighbors
            if nb:
                for j in [j for j, rec in nb.items() if rec.time < stale]:
                    del nb[j]
        rc = self.radio
        air = rd.packet_airtime(rd.BEACON_BYTES, rc)
        e_tx = rc.fixed_tx_power * air
        e_rx = rc.rx_power * air
        c_tx, c_rx = _CAT["beacon_tx"], _CAT["beacon_rx"]
        debit = self.ledger.debit
        states = self.states
        sent = received = 0
        for i in range(self.n):
            if not alive_list[i]:
                continue
            rec = BeaconRecord(t, float(X[i]), float(Y[i]), m.vx[i], m.vy[i], states[i].activity,
                               self.ledger.residual[i])
            debit(i, e_tx, c_tx, t)
            sent += 1
            for j in np.flatnonzero(mask[i]).tolist():
                if alive_list[j]:
                    states[j].neighbors[i] = rec
                    debit(j, e_rx, c_rx, t)
                    received += 1
            if self.stopped:
                break
        self.counters["beacons_sent"] += sent
        self.counters["beacon_receptions"] += received
        t_next = (k + 1) * BEACON_INTERVAL
        if t_next < self.end_time and not self.stopped:
            self.schedule(t_next, BEACON_TICK, k + 1)

    # -- medium access ---------------------------------------------------

    def enqueue(self, node: int, frame: Frame) -> None:
        if not self.alive[node]:
            return
        q = self.queues[node]
        q.append(frame)
        if len(q) == 1 and not self.busy[node]:
            self.waiting[node] = (frame.enq, node)
            self._pending.append(node)
            if not self._batch:
                self._kick()

    def _kick(self) -> None:
        """Offer the channel to pending nodes, oldest head-of-line frame first.

        A deferred node is only re-examined when the frame that blocked it
        ends, or when a new frame reaches the head of its queue.
        """
        pending = self._pending
        if not pending:
            return
        self._pending = []
        waiting = self.waiting
        busy = self.busy
        if len(pending) > 1:
            pending = sorted({v for v in pending if v in waiting}, key=waiting.__getitem__)
        # Frames seen blocking or started during this pass. Broadcast heads
        # are tested against them inline before the full start attempt.
        known = []
        m = self.mover
        t = self.now
        queues = self.queues
        for node in pending:
            if node not in waiting or busy[node]:
                continue
            if known and queues[node] and queues[node][0].dst < 0:
                x = m.x0[node] + m.vx[node] * (t - m.t0[node])
                y = m.y0[node] + m.vy[node] * (t - m.t0[node])
                for h in known:
                    if node == h.src or node == h.dst or (x - h.sx) ** 2 + (y - h.sy) ** 2 <= h.r2 or (
                        h.dst >= 0 and (x - h.tx) ** 2 + (y - h.ty) ** 2 <= h.r2
                    ):
                        h.blocked.append(node)
                        break
                else:
                    self._attempt(node, known)
            else:
                self._attempt(node, known)

    def _attempt(self, node: int, known: list) -> None:
        if self._try_start(node):
            known.append(self.inflight[-1])
        elif self._last_blocker is not None and self._last_blocker not in known:
            known.append(self._last_blocker)

    def _blocker(self, a, ax, ay, b, bx, by):
        """The in-flight frame that keeps a/b off the channel longest, if any."""
        worst = None
        for f in self.inflight:
            r2 = f.r2
            if (
                a == f.src or a == f.dst
                or (b >= 0 and (b == f.src or b == f.dst))
                or (ax - f.sx) ** 2 + (ay - f.sy) ** 2 <= r2
                or (f.dst >= 0 and (ax - f.tx) ** 2 + (ay - f.ty) ** 2 <= r2)
                or (b >= 0 and (
                    (bx - f.sx) ** 2 + (by - f.sy) ** 2 <= r2
                    or (f.dst >= 0 and (bx - f.tx) ** 2 + (by - f.ty) ** 2 <= r2)
                ))
            ):
                if worst is None or f.end > worst.end:
                    worst = f
        return worst

    def _try_start(self, node: int) -> bool:
        self._last_blocker = None
        q = self.queues[node]
        m = self.mover
        t = self.now
        alive = self.alive
        x0, y0, vx, vy, t0 = m.x0, m.y0, m.vx, m.vy, m.t0
        while q:
            f = q[0]
            ax = x0[node] + vx[node] * (t - t0[node])
            ay = y0[node] + vy[node] * (t - t0[node])
            b = f.dst
            if b >= 0:
                bx = x0[b] + vx[b] * (t - t0[b])
                by = y0[b] + vy[b] * (t - t0[b])
                d2 = (ax - bx) ** 2 + (ay - by) ** 2
                if not alive[b] or d2 > self.range2:
                    q.popleft()
                    self.counters["mac_failures"] += 1
                    self._delivery_failed(f)
                    if not alive[node]:
                        q.clear()
                    continue
            else:
                bx = by = d2 = 0.0
            if self.inflight:
                blocker = self._blocker(node, ax, ay, b, bx, by)
                self._last_blocker = blocker
                if blocker is not None:
                    self.waiting[node] = (f.enq, node)
                    blocker.blocked.append(node)
                    return False
            q.popleft()
            self.waiting.pop(node, None)
            if b >= 0:
                dist = math.sqrt(d2)
                radius = dist if self.power_control else self.range
                f.dist = dist
                f.tx, f.ty = bx, by
                duration = (f.nbytes + self.handshake_bytes) * self.bit_time
            else:
                radius = self.range
                f.dist = self.range
                f.receivers = self._neighbors_of(node, ax, ay)
                duration = f.nbytes * self.bit_time
            f.r2 = radius * radius
            f.sx, f.sy = ax, ay
            f.started = t
            f.blocked = []
            f.end = t + duration
            self.inflight.append(f)
            self.busy[node] = True
            self.schedule(f.end, FRAME_END, f)
            return True
        self.waiting.pop(node, None)
        return False

    def _neighbors_of(self, node: int, x: float, y: float) -> list[int]:
        X, Y = self.mover.positions(self.now)
        mask = (X - x) ** 2 + (Y - y) ** 2 <= self.range2
        mask &= self._alive_arr
        mask[node] = False
        return np.flatnonzero(mask).tolist()

    def _on_frame_end(self, f: Frame) -> None:
        self.inflight.remove(f)
        src, dst = f.src, f.dst
        self.busy[src] = False
        t = self.now
        led = self.ledger
        residual = led.residual
        debits = led.debits
        alive = self.alive
        cat_tx, cat_rx = _FRAME_CATEGORIES[f.kind]
        self._batch = True
        if dst >= 0:
            p = self.radio.fixed_tx_power if not self.power_control else rd.tx_power(f.dist, self.radio)
            air = f.nbytes * self.bit_time
            # (joules, category) per endpoint: RTS/CTS+ACK handshake plus the frame itself.
            charges = (
                (src, self.e_rts_tx, CTL_TX), (src, p * air, cat_tx), (src, self.e_ctsack_rx, CTL_RX),
                (dst, self.e_rts_rx, CTL_RX), (dst, p * self.air_ctsack, CTL_TX), (dst, self.rx_power * air, cat_rx),
            )
            for node, joules, cat in charges:
                if alive[node]:
                    if joules < residual[node]:
                        residual[node] -= joules
                        debits[node][cat] += joules
                    else:
                        led.debit(node, joules, cat, t)
            if alive[dst] and not self.stopped:
                self._deliver(f)
        else:
            air = f.nbytes * self.bit_time
            if alive[src]:
                led.debit(src, self.radio.fixed_tx_power * air, cat_tx, t)
            e_rx = self.rx_power * air
            receivers = [j for j in f.receivers if alive[j]]
            for j in receivers:
                if e_rx < residual[j]:
                    residual[j] -= e_rx
                    debits[j][cat_rx] += e_rx
                elif alive[j]:
                    led.debit(j, e_rx, cat_rx, t)
            if not self.stopped:
                rreq = f.payload
                path = rreq.path
                key = (rreq.source, rreq.dest)
                seq = rreq.seq
                states = self.states
                self.counters["rreq_receptions"] += len(receivers)
                for j in receivers:
                    # Fast path for the copies handle_rreq would drop anyway.
                    if j != rreq.dest and (seq <= states[j].seen_seq.get(key, 0) or j in path):
                        continue
                    if alive[j]:
                        self._receive_rreq(j, rreq, src)
        self._batch = False
        if self.stopped:
            return
        self._pending.extend(f.blocked)
        if self.queues[src] and alive[src]:
            self.waiting[src] = (self.queues[src][0].enq, src)
            self._pending.append(src)
        self._kick()

    def _unicast(self, src, dst, nbytes, kind, payload) -> None:
        self.enqueue(src, Frame(src, dst, nbytes, kind, payload, self.now))

    def _deliver(self, f: Frame) -> None:
        kind = f.kind
        if kind == KIND_DATA:
            pkt = f.payload
            sess = pkt.session
            pkt.idx += 1
            path = pkt.route.path
            if pkt.idx == len(path) - 1:
                if sess.active:
                    self.packets_delivered += 1
                    self.delays.append(self.now - pkt.created)
            else:
                self.counters["data_frames"] += 1
                self._unicast(f.dst, path[pkt.idx + 1], sess.spec.payload, KIND_DATA, pkt)
        elif kind == KIND_RREP:
            reply, idx = f.payload
            idx -= 1
            if idx == 0:
                self._install(reply)
            else:
                self.counters["rrep_tx"] += 1
                self._unicast(f.dst, reply.path[idx - 1], f.nbytes, KIND_RREP, (reply, idx))
        elif kind == KIND_RERR:
            sess, path, idx = f.payload
            idx -= 1
            if idx == 0:
                sess.awaiting_rerr = False
                if sess.route is None:
                    self.initiate_discovery(sess)
            else:
                self.counters["rerr_tx"] += 1
                self._unicast(f.dst, path[idx - 1], RERR_BYTES, KIND_RERR, (sess, path, idx))

    def _delivery_failed(self, f: Frame) -> None:
        if f.kind == KIND_DATA:
            pkt = f.payload
            sess = pkt.session
            if sess.route is pkt.route:
                self.handle_link_break(sess, pkt.route, pkt.idx)
        # Lost RREPs are recovered by the discovery timeout, lost RERRs by
        # the source's fallback timer.

    # -- traffic -----------------------------------------------------------

    def _on_session_start(self, sess: SessionState) -> None:
        if not (self.alive[sess.spec.source] and self.alive[sess.spec.dest]):
            return
        sess.active = True
        self.initiate_discovery(sess)
        self._on_emit(sess)

    def _on_emit(self, sess: SessionState) -> None:
        if not sess.active:
            return
        spec = sess.spec
        pkt = Packet(sess, self.now)
        self.packets_sent += 1
        route = sess.route
        if route is not None:
            pkt.route = route
            self.counters["data_frames"] += 1
            self._unicast(spec.source, route.path[1], spec.payload, KIND_DATA, pkt)
        else:
            if len(sess.buffer) == sess.buffer.maxlen:
                self.counters["buffer_drops"] += 1
            sess.buffer.append(pkt)
            if not sess.discovering and not sess.awaiting_rerr:
                self.initiate_discovery(sess)
        sess.emitted += 1
        t_next = spec.start + sess.emitted / spec.rate
        if t_next <= self.end_time:
            self.schedule(t_next, PACKET_EMIT, sess)

    # -- route discovery ----------------------------------------------------

    def initiate_discovery(self, sess: SessionState) -> None:
        if not sess.active or sess.discovering or sess.route is not None:
            return
        src = sess.spec.source
        self.src_seq[src] += 1
        sess.seq = seq = self.src_seq[src]
        sess.discovering = True
        sess.attempt += 1
        self.counters["discovery_attempts"] += 1
        self.counters["rreq_tx"] += 1
        rreq = RouteRequest(seq, src, sess.spec.dest, (src,))
        self.enqueue(src, Frame(src, BROADCAST, RREQ_BASE_BYTES + PATH_ENTRY_BYTES, KIND_RREQ, rreq, self.now))
        timeout = min(DISCOVERY_TIMEOUT_S * 2 ** (sess.attempt - 1), DISCOVERY_TIMEOUT_CAP_S)
        self.schedule(self.now + timeout, DISCOVERY_TIMEOUT, (sess, seq))

    def _on_discovery_timeout(self, arg) -> None:
        if arg[1] == "rerr":
            sess, _, token = arg
            if sess.awaiting_rerr and sess.rerr_token == token:
                sess.awaiting_rerr = False
                self.initiate_discovery(sess)
            return
        sess, seq = arg
        if sess.discovering and sess.seq == seq:
            sess.discovering = False
            self.initiate_discovery(sess)

    def _link_metric(self, upstream: int, node: int) -> float:
        m = self.mover
        t = self.now
        xj, yj = m.position(node, t)
        rec = self.states[node].neighbors.get(upstream)
        if rec is not None:
            dt = t - rec.time
            xu, yu, vxu, vyu = rec.x + rec.vx * dt, rec.y + rec.vy * dt, rec.vx, rec.vy
        else:
            (xu, yu), vxu, vyu = m.position(upstream, t), m.vx[upstream], m.vy[upstream]
        try:
            return lifetime_from_relative(xu - xj, yu - yj, vxu - m.vx[node], vyu - m.vy[node], self.range)
        except NotNeighborsError:
            # Stale beacon puts the upstream node out of range: link already expired.
            return 0.0

    def node_metric(self, node: int):
        if self.policy is Policy.LBR:
            st = self.states[node]
            return (st.activity, traffic_interference(st))
        return self.ledger.residual[node]

    def _receive_rreq(self, node: int, rreq: RouteRequest, sender: int) -> None:
        if self.policy is Policy.FORP:
            fn = lambda: self._link_metric(sender, node)
        else:
            fn = lambda: self.node_metric(node)
        action, pkt = handle_rreq(self.states[node], node, rreq, self.policy, fn)
        if action == FORWARD:
            self.counters["rreq_tx"] += 1
            nbytes = RREQ_BASE_BYTES + PATH_ENTRY_BYTES * len(pkt.path)
            self.enqueue(node, Frame(node, BROADCAST, nbytes, KIND_RREQ, pkt, self.now))
        elif action == DELIVER:
            key = (rreq.source, rreq.dest, rreq.seq)
            if key in self.closed_windows:
                return
            cands = self.windows.get(key)
            if cands is None:
                self.windows[key] = [pkt]
                self.schedule(self.now + self.scenario.reply_window_s, REPLY_WINDOW_CLOSE, key)
            else:
                cands.append(pkt)

    def _on_window_close(self, key) -> None:
        cands = self.windows.pop(key)
        self.closed_windows.add(key)
        dest = key[1]
        if not self.alive[dest]:
            return
        best, value = select_route(self.policy, cands)
        reply = RouteReply(key[2], best.path, value)
        self._log("discovered", self.by_pair.get((key[0], dest)), best.path, value)
        self.counters["rrep_tx"] += 1
        idx = len(best.path) - 1
        nbytes = RREP_BASE_BYTES + PATH_ENTRY_BYTES * len(best.path)
        self._unicast(dest, best.path[idx - 1], nbytes, KIND_RREP, (reply, idx))

    def _install(self, reply: RouteReply) -> None:
        path = reply.path
        sess = self.by_pair.get((path[0], path[-1]))
        if sess is None or not sess.active or not sess.discovering or sess.seq != reply.seq:
            return
        alive = self.alive
        if not all(alive[v] for v in path) or not all(self._in_range(u, v) for u, v in zip(path, path[1:])):
            # Path decayed while the reply was in transit.
            sess.discovering = False
            self.initiate_discovery(sess)
            return
        route = Route(sess.spec.id, path, self.now, reply.metric)
        install_route(route, self.states)
        sess.route = route
        sess.discovering = False
        sess.attempt = 0
        sess.discoveries += 1
        self._log("installed", sess, path, reply.metric)
        src, nxt, payload = path[0], path[1], sess.spec.payload
        while sess.buffer:
            pkt = sess.buffer.popleft()
            pkt.route = route
            self.counters["data_frames"] += 1
            self._unicast(src, nxt, payload, KIND_DATA, pkt)

    # -- route maintenance ------------------------------------------------

    def _end_route(self, sess: SessionState, event: str) -> None:
        route = sess.route
        if route is None:
            return
        duration = self.now - route.created_at
        if duration > 0:
            sess.segments.append((route.hops, duration))
        teardown_route(route, self.states)
        sess.route = None
        self._log(event, sess, route.path, route.metric)

    def handle_link_break(self, sess: SessionState, route: Route, idx: int) -> None:
        """``route.path[idx]`` could not reach ``route.path[idx + 1]``."""
        if sess.route is not route:
            return
        self._end_route(sess, "broken")
        if not sess.active:
            return
        if idx == 0:
            self.initiate_discovery(sess)
            return
        sess.awaiting_rerr = True
        sess.rerr_token += 1
        self.counters["rerr_tx"] += 1
        node = route.path[idx]
        self._unicast(node, route.path[idx - 1], RERR_BYTES, KIND_RERR, (sess, route.path, idx))
        self.schedule(self.now + RERR_FALLBACK_S, DISCOVERY_TIMEOUT, (sess, "rerr", sess.rerr_token))

    def _on_death(self, node: int, t: float) -> None:
        self._alive_arr[node] = False
        self.queues[node].clear()
        self.waiting.pop(node, None)
        for s in self.sessions:
            if s.active and (s.spec.source == node or s.spec.dest == node):
                s.active = False
                s.discovering = False
                s.buffer.clear()
                self._end_route(s, "torn_down")
        limit = self.scenario.stop_after_failures
        if limit is not None and len(self.ledger.deaths) >= limit:
            self.stopped = True
            self.finished_at = t

    def _log(self, event, sess, path, metric) -> None:
        if self.route_log is not None and sess is not None:
            self.route_log.append((self.now, sess.spec.id, event, "-".join(map(str, path)), metric))

    # -- results -------------------------------------------------------------

    def report(self) -> MetricsReport:
        end = self.finished_at
        segments = [seg for s in self.sessions for seg in s.segments]
        for s in self.sessions:
            if s.route is not None and end > s.route.created_at:
                segments.append((s.route.hops, end - s.route.created_at))
        led = self.ledger
        consumed = [led.consumed(i) for i in range(self.n)]
        first, rel = failure_timeline([led.death_time[i] for i in led.deaths])
        counters = dict(self.counters)
        counters["dead_debit_attempts"] = led.dead_debit_attempts
        counters["finished_at"] = end
        return MetricsReport(
            route_transitions_avg=route_transitions_avg([s.discoveries for s in self.sessions]) if self.sessions else None,
            hop_count_time_avg=time_averaged_hop_count(segments),
            delay_avg=delay_avg(self.delays),
            energy_per_node_avg=math.fsum(consumed) / self.n,
            energy_stddev=fairness_stddev(consumed),
            first_failure_time=first,
            failure_times_rel=rel,
            packets_sent=self.packets_sent,
            packets_delivered=self.packets_delivered,
            discoveries=sum(s.discoveries for s in self.sessions),
            per_node_energy=consumed,
            counters=counters,
        )


def run(scenario: Scenario, **kwargs) -> MetricsReport:
    return Simulator(scenario, **kwargs).run()
