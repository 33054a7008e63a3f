"""Mobile agents: patrol walks, routing-table refresh and clone-probe-select rerouting."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from random import Random
from typing import Container, Iterable, Iterator, Mapping, Sequence

from .net_model import (
    CongestionReport,
    Level,
    NodeId,
    NodeState,
    RouteEntry,
    RoutingTable,
    Topology,
)


class AgentError(Exception):
    pass


class Isolated(AgentError):
    pass


class NoAlternative(AgentError):
    pass


class DeadEnd(AgentError):
    pass


class AllProbesFailed(AgentError):
    pass


class StalePath(AgentError):
    pass


class ZeroDelay(AgentError):
    pass


class Mode(Enum):
    PATROL = "patrol"
    PROBE = "probe"


class _Arrived:
    def __repr__(self):
        return "Arrived"


ARRIVED = _Arrived()


@dataclass(frozen=True)
class HistoryEntry:
    node: NodeId
    arrived_at: int
    observed: CongestionReport
    # rate of the link the agent came in over; None for the starting node
    via_rate: float | None = None


@dataclass
class ProbeContext:
    source: NodeId
    destination: NodeId
    divergence_node: NodeId
    path_so_far: list[NodeId]
    probe_size: int
    injected_at: int = 0
    # source-routed part of the trip: source .. divergence node, then the clone's neighbour
    route_prefix: tuple[NodeId, ...] = ()


@dataclass(frozen=True)
class ProbeResult:
    path: tuple[NodeId, ...]
    channel_delay: float
    data_rate: float

    @property
    def hops(self) -> int:
        return len(self.path) - 1


@dataclass
class MobileAgent:
    agent_id: int
    mode: Mode
    home: NodeId
    location: NodeId
    history: deque = field(default_factory=deque)
    lineage: int | None = None
    probe_ctx: ProbeContext | None = None

    def __post_init__(self):
        if (self.mode is Mode.PROBE) != (self.probe_ctx is not None):
            raise ValueError("probe agents carry a probe context, patrol agents do not")

    @classmethod
    def patrol(cls, home: NodeId, agent_id: int = 0, history_limit: int | None = None):
        return cls(
            agent_id=agent_id,
            mode=Mode.PATROL,
            home=home,
            location=home,
            history=deque(maxlen=history_limit),
        )

    def record(self, node: NodeId, now: int, observed: CongestionReport, via_rate: float | None = None):
        if self.history and now <= self.history[-1].arrived_at:
            raise ValueError("history must be strictly increasing in time")
        self.location = node
        self.history.append(HistoryEntry(node, now, observed, via_rate))


def patrol_step(agent: MobileAgent, neighbors: Iterable[NodeId], rng: Random) -> NodeId:
    """Pick the next node uniformly among ``neighbors``."""
    if agent.mode is not Mode.PATROL:
        raise ValueError("patrol_step on a probe agent")
    choices = sorted(neighbors)
    if not choices:
        raise Isolated(f"agent {agent.agent_id} at {agent.location} has no neighbours")
    return choices[rng.randrange(len(choices))]


def arrive(agent: MobileAgent, node: NodeId, now: int, observed: CongestionReport, via_rate: float | None):
    agent.record(node, now, observed, via_rate)


def update_routing_table(node: NodeState, agent: MobileAgent, live: Container[NodeId] | None = None) -> int:
    """Install what ``agent``'s walk says about reaching earlier-visited nodes.

    The route to a destination is the loop-erased reverse of the walk since the
    agent's newest visit there. ``live`` (the node's current neighbours) filters
    out routes whose first hop has since disappeared. Returns the number of
    entries written.
    """
    hist = agent.history
    n = len(hist)
    if n < 2 or hist[-1].node != node.id:
        return 0
    table = node.routing_table
    changed = 0
    # first_seen[v]: earliest index >= j at which the walk visited v
    first_seen = {hist[n - 1].node: n - 1}
    for j in range(n - 2, -1, -1):
        dest = hist[j].node
        known = dest in first_seen
        first_seen[dest] = j
        if known or dest == node.id:
            continue
        entry = table.get(dest)
        info_time = hist[j].arrived_at
        if entry is not None and info_time <= entry.updated_at:
            continue
        # hop back from here: the link into hist[i] joins consecutive nodes
        i = first_seen[node.id]
        next_hop = hist[i - 1].node
        if live is not None and next_hop not in live:
            continue
        rate = hist[i].via_rate
        congested = hist[i].observed.any_high
        while i > j:
            i = first_seen[hist[i - 1].node]
            if i > j:
                rate = min(rate, hist[i].via_rate)
            congested = congested or hist[i].observed.any_high
        if entry is None or not entry.committed:
            table.set(dest, RouteEntry(next_hop, rate, congested, info_time))
            changed += 1
        elif entry.next_hop == next_hop:
            table.set(dest, RouteEntry(next_hop, rate, congested, info_time, committed=True))
            changed += 1
    return changed


def propagate_congestion(
    node: NodeState, neighbors: Iterable[NodeId], now: int, low: float = 0.5, high: float = 0.8
) -> list[tuple[NodeId, CongestionReport]]:
    """Fresh report for ``node`` addressed to each live neighbour."""
    report = node.report(now, low, high)
    return [(n, report) for n in sorted(neighbors)]


def receive_report(receiver: NodeState, sender: NodeId, report: CongestionReport, now: int) -> None:
    receiver.neighbor_views[sender] = (report, now)


def initiate_reroute(
    detector: NodeId,
    congested_next_hop: NodeId,
    destination: NodeId,
    topo: Topology,
    *,
    upstream_path: Sequence[NodeId] = (),
    probe_size: int = 8000,
    parent: int | None = None,
    ids: Iterator[int] | None = None,
) -> list[MobileAgent]:
    """Clone one probe per eligible neighbour of ``detector``.

    ``upstream_path`` is the route the traffic took from its source up to and
    including ``detector``; it defaults to the detector alone.
    """
    prefix = list(upstream_path) or [detector]
    if prefix[-1] != detector:
        raise ValueError("upstream path must end at the detector")
    excluded = set(prefix) | {congested_next_hop}
    eligible = [n for n in topo.neighbors(detector) if n not in excluded]
    if not eligible:
        raise NoAlternative(f"{detector} has no neighbour besides {congested_next_hop} and upstream")
    ids = ids if ids is not None else itertools.count()
    lineage = next(ids) if parent is None else parent
    clones = []
    for via in eligible:
        ctx = ProbeContext(
            source=prefix[0],
            destination=destination,
            divergence_node=detector,
            path_so_far=[prefix[0]],
            probe_size=probe_size,
            route_prefix=tuple(prefix) + (via,),
        )
        clones.append(
            MobileAgent(
                agent_id=next(ids),
                mode=Mode.PROBE,
                home=prefix[0],
                location=prefix[0],
                lineage=lineage,
                probe_ctx=ctx,
            )
        )
    return clones


def hop_distances(topo: Topology, destination: NodeId) -> dict[NodeId, int]:
    dist = {destination: 0}
    frontier = deque([destination])
    while frontier:
        u = frontier.popleft()
        for v in topo.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist


def probe_advance(
    agent: MobileAgent,
    topo: Topology,
    tables: Mapping[NodeId, RoutingTable],
    dist: Mapping[NodeId, int] | None = None,
):
    """Next hop for a probe, or ``ARRIVED``; extends ``path_so_far``.

    Raises DeadEnd when every onward neighbour is already on the path.
    """
    if agent.mode is not Mode.PROBE:
        raise ValueError("probe_advance on a patrol agent")
    ctx = agent.probe_ctx
    here = agent.location
    if here == ctx.destination:
        return ARRIVED
    nxt = choose_probe_hop(ctx, here, topo, tables, dist)
    ctx.path_so_far.append(nxt)
    agent.location = nxt
    if nxt == ctx.destination:
        return ARRIVED
    return nxt


def choose_probe_hop(
    ctx: ProbeContext,
    here: NodeId,
    topo: Topology,
    tables: Mapping[NodeId, RoutingTable],
    dist: Mapping[NodeId, int] | None = None,
) -> NodeId:
    visited = set(ctx.path_so_far)
    pos = len(ctx.path_so_far) - 1
    if pos + 1 < len(ctx.route_prefix):
        nxt = ctx.route_prefix[pos + 1]
        if topo.has_link(here, nxt) and nxt not in visited:
            return nxt
        raise DeadEnd(f"source-routed hop {here}->{nxt} unavailable")
    table = tables.get(here)
    entry = table.get(ctx.destination) if table is not None else None
    if entry is not None and entry.next_hop not in visited and topo.has_link(here, entry.next_hop):
        return entry.next_hop
    if dist is None:
        dist = hop_distances(topo, ctx.destination)
    best = None
    for n in topo.neighbors(here):
        if n in visited or n not in dist:
            continue
        if best is None or dist[n] < dist[best]:
            best = n
    if best is None:
        raise DeadEnd(f"probe at {here} has no loop-free way to {ctx.destination}")
    return best


def measure_path_rate(ctx: ProbeContext, arrival_time: int) -> ProbeResult:
    """Data size over channel delay; times are integer nanoseconds."""
    delay_ns = arrival_time - ctx.injected_at
    if delay_ns <= 0:
        raise ZeroDelay(f"probe arrival {arrival_time} not after injection {ctx.injected_at}")
    delay = delay_ns / 1e9
    return ProbeResult(tuple(ctx.path_so_far), delay, ctx.probe_size / delay)


def select_path(results: Iterable[ProbeResult]) -> ProbeResult:
    results = list(results)
    if not results:
        raise AllProbesFailed("no probe came back")
    return min(results, key=lambda r: (-r.data_rate, r.hops, r.path))


def install_path(
    winner: ProbeResult,
    tables: Mapping[NodeId, RoutingTable],
    topo: Topology,
    now: int,
    congested: bool = False,
) -> int:
    path = winner.path
    for u, v in zip(path, path[1:]):
        if not topo.has_link(u, v):
            raise StalePath(f"link {u}-{v} died since probing")
    dest = path[-1]
    written = 0
    for u, v in zip(path, path[1:]):
        table = tables[u]
        old = table.get(dest)
        stamp = now if old is None else max(now, old.updated_at)
        table.set(dest, RouteEntry(v, winner.data_rate, congested, stamp, committed=True))
        written += 1
    return written


def is_congested(report: CongestionReport, cls) -> bool:
    return report.levels[cls] is Level.HIGH
