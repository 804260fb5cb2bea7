"""On-demand flooding discovery with FORP, LBR and MMBCR route selection."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Sequence


class Policy(str, Enum):
    FORP = "forp"
    LBR = "lbr"
    MMBCR = "mmbcr"


class DiscoveryFailure(RuntimeError):
    pass


DROP = "drop"
FORWARD = "forward"
DELIVER = "deliver"


@dataclass(frozen=True)
class RouteRequest:
    """A flooded query.

    ``metrics`` holds one entry per traversed link for FORP (predicted
    link lifetime) and one entry per intermediate node for LBR
    (``(activity, interference)``) and MMBCR (residual battery).
    """

    seq: int
    source: int
    dest: int
    path: tuple[int, ...]
    metrics: tuple = ()

    def extended(self, node: int, metric=None) -> "RouteRequest":
        metrics = self.metrics if metric is None else self.metrics + (metric,)
        return RouteRequest(self.seq, self.source, self.dest, self.path + (node,), metrics)


@dataclass(frozen=True)
class RouteReply:
    seq: int
    path: tuple[int, ...]
    metric: float


@dataclass
class Route:
    session_id: int
    path: tuple[int, ...]
    created_at: float
    metric: float
    live: bool = True

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    @property
    def intermediates(self) -> tuple[int, ...]:
        return self.path[1:-1]


@dataclass
class BeaconRecord:
    time: float
    x: float
    y: float
    vx: float
    vy: float
    activity: int
    battery: float


@dataclass
class NodeRoutingState:
    seen_seq: dict = field(default_factory=dict)
    activity: int = 0
    neighbors: dict = field(default_factory=dict)

    @property
    def neighbor_activity(self) -> dict[int, int]:
        return {j: rec.activity for j, rec in self.neighbors.items()}

    @property
    def last_beacon_heard(self) -> dict[int, float]:
        return {j: rec.time for j, rec in self.neighbors.items()}


def traffic_interference(state: NodeRoutingState) -> int:
    """Sum of the activities last beaconed by the node's current neighbours."""
    return sum(rec.activity for rec in state.neighbors.values())


def handle_rreq(
    state: NodeRoutingState,
    node: int,
    rreq: RouteRequest,
    policy: Policy,
    metric_fn: Callable[[], object],
    first_copy_only: bool = True,
):
    """Process one received RREQ copy at ``node``.

    Returns ``(action, packet)``. For ``FORWARD`` the packet is the extended
    request to rebroadcast; for ``DELIVER`` it is the complete candidate
    (path ending at the destination). ``metric_fn`` is only called when the
    node actually contributes a metric: FORP's upstream link lifetime at
    every receiver, the node's own metric at intermediates otherwise.
    """
    if node in rreq.path:
        return DROP, None
    if node == rreq.dest:
        metric = metric_fn() if policy is Policy.FORP else None
        return DELIVER, rreq.extended(node, metric)
    if first_copy_only:
        key = (rreq.source, rreq.dest)
        if rreq.seq <= state.seen_seq.get(key, 0):
            return DROP, None
        state.seen_seq[key] = rreq.seq
    return FORWARD, rreq.extended(node, metric_fn())


def path_value(policy: Policy, path: Sequence[int], metrics: Sequence) -> float:
    """Selection metric of a complete candidate.

    FORP: minimum link lifetime. LBR: summed activity plus interference
    of the intermediates (0 for a direct hop). MMBCR: smallest
    intermediate battery (infinite for a direct hop).
    """
    if policy is Policy.FORP:
        if len(metrics) != len(path) - 1:
            raise ValueError("FORP needs one lifetime per link")
        return min(metrics)
    if len(metrics) != len(path) - 2:
        raise ValueError(f"{policy.value} needs one metric per intermediate node")
    if policy is Policy.LBR:
        return float(sum(a + ti for a, ti in metrics))
    return min(metrics) if metrics else math.inf


def select_route(policy: Policy, candidates: Sequence[RouteRequest]) -> tuple[RouteRequest, float]:
    """Pick the best candidate; ties go to fewer hops, then earlier arrival.

    ``candidates`` must be in arrival order.
    """
    if not candidates:
        raise DiscoveryFailure("no route candidates")
    if policy is Policy.LBR:
        sign = 1.0
    else:
        sign = -1.0
    best_key, best, best_value = None, None, None
    for order, cand in enumerate(candidates):
        value = path_value(policy, cand.path, cand.metrics)
        key = (sign * value, len(cand.path), order)
        if best_key is None or key < best_key:
            best_key, best, best_value = key, cand, value
    return best, best_value


def install_route(route: Route, states: Sequence[NodeRoutingState]) -> None:
    for node in route.intermediates:
        states[node].activity += 1


def teardown_route(route: Route, states: Sequence[NodeRoutingState]) -> None:
    if not route.live:
        return
    route.live = False
    for node in route.intermediates:
        states[node].activity -= 1
        assert states[node].activity >= 0


def flood_static(
    adjacency: Mapping[int, Sequence[int]],
    source: int,
    dest: int,
    policy: Policy,
    link_metric: Callable[[int, int], float] | None = None,
    node_metric: Callable[[int], object] | None = None,
    first_copy_only: bool = True,
    seq: int = 1,
    states: Mapping[int, NodeRoutingState] | None = None,
) -> list[RouteRequest]:
    """Run one discovery over a frozen topology and return destination candidates.

    Copies propagate breadth-first with neighbours visited in ascending id
    order, so arrival order is (hop count, path) lexicographic. With
    ``first_copy_only=False`` every loop-free copy is forwarded and the
    destination sees every simple path.
    """
    if states is None:
        states = {v: NodeRoutingState() for v in adjacency}
    candidates: list[RouteRequest] = []
    queue = deque([RouteRequest(seq, source, dest, (source,))])
    while queue:
        rreq = queue.popleft()
        sender = rreq.path[-1]
        for node in sorted(adjacency[sender]):
            if policy is Policy.FORP:
                fn = lambda u=sender, v=node: link_metric(u, v)
            else:
                fn = lambda v=node: node_metric(v)
            action, pkt = handle_rreq(states[node], node, rreq, policy, fn, first_copy_only)
            if action == FORWARD:
                queue.append(pkt)
            elif action == DELIVER:
                candidates.append(pkt)
    return candidates
