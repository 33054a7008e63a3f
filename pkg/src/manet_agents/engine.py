"""Deterministic discrete-event simulator for agent and baseline routing.

Time is integer nanoseconds. Every link direction is a single non-preemptive
server fed from the sending node's per-class queues (Voice first). Data,
patrol hops, congestion reports and probes all travel as frames through those
queues, so control traffic costs real capacity.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from random import Random
from typing import Callable

from . import agents as ag
from .metrics import TOTAL_ID, FlowMetrics, Metrics, loss_ratio, nearest_rank
from .net_model import (
    CLASSES,
    SERVICE_ORDER,
    Level,
    MissingLink,
    NodeId,
    NodeState,
    RouteEntry,
    RoutingTable,
    Topology,
    TrafficClass,
    detect_mismatch,
)
from .scenario import Flow, Scenario

log = logging.getLogger(__name__)

NS = 1_000_000_000


class RunMode(str, Enum):
    AGENT = "agent"
    BASELINE = "baseline"


class EventKind(IntEnum):
    PACKET_ARRIVAL = 0
    TRANSMIT_DONE = 1
    AGENT_STEP = 2
    CONGESTION_BROADCAST = 3
    PROBE_TIMEOUT = 4
    LINK_EVENT = 5
    FLOW_START = 6
    FLOW_STOP = 7
    METRICS_SAMPLE = 8


class FrameKind(IntEnum):
    DATA = 0
    PATROL = 1
    REPORT = 2
    PROBE = 3


class Admission(Enum):
    ACCEPTED = "accepted"
    DROPPED = "dropped"


class NoRoute(Exception):
    pass


# packet outcomes
IN_FLIGHT, DELIVERED, DROPPED_QUEUE, DROPPED_NOROUTE = range(4)


class Packet:
    """A frame on the wire; data packets and agent carriers alike."""

    __slots__ = ("kind", "flow", "seq", "size", "cls", "src", "dst", "created_at", "delivered_at", "trace", "outcome", "payload")

    def __init__(self, kind, size, cls, src, dst, created_at, flow=-1, seq=0, payload=None):
        self.kind = kind
        self.flow = flow
        self.seq = seq
        self.size = size
        self.cls = cls
        self.src = src
        self.dst = dst
        self.created_at = created_at
        self.delivered_at = None
        self.trace = [src]
        self.outcome = IN_FLIGHT
        self.payload = payload


def seconds_to_ns(s: float) -> int:
    return round(s * NS)


def tx_time_ns(size_bits: int, rate_bps: float) -> int:
    return max(1, round(size_bits * NS / rate_bps))


def enqueue_packet(node: NodeState, packet: Packet, next_hop: NodeId) -> Admission:
    """Drop-tail admission into the packet's class queue."""
    if node.queues[packet.cls].offer(next_hop, packet):
        return Admission.ACCEPTED
    return Admission.DROPPED


def service_next(node: NodeState, next_hop: NodeId) -> Packet | None:
    """Oldest frame for ``next_hop`` from the most delay-sensitive non-empty class."""
    queues = node.queues
    for cls in SERVICE_ORDER:
        q = queues[cls]
        lane = q.lanes.get(next_hop)
        if lane:
            q.length -= 1
            return lane.popleft()
    return None


def forward(node: NodeState, packet: Packet) -> NodeId:
    entry = node.routing_table.entries.get(packet.dst)
    if entry is None:
        raise NoRoute(f"{node.id} has no route to {packet.dst}")
    return entry.next_hop


def baseline_route(topo: Topology, now: int = 0) -> dict[NodeId, RoutingTable]:
    """Shortest-hop tables, ties broken by the smaller next-hop id."""
    tables = {n: RoutingTable(n) for n in topo.nodes}
    for dest in topo.nodes:
        dist = ag.hop_distances(topo, dest)
        rate_to = {dest: math.inf}
        for u in sorted(dist, key=lambda n: (dist[n], n)):
            if u == dest:
                continue
            for v in topo.neighbors(u):
                if dist.get(v) == dist[u] - 1:
                    rate = min(topo.rate(u, v), rate_to[v])
                    rate_to[u] = rate
                    tables[u].entries[dest] = RouteEntry(v, rate, False, now, committed=True)
                    break
    return tables


@dataclass
class RerouteRound:
    key: tuple[NodeId, NodeId]
    detector: NodeId
    congested_next_hop: NodeId
    started_at: int
    pending: set = field(default_factory=set)
    results: list = field(default_factory=list)
    failed: int = 0
    winner: ag.ProbeResult | None = None
    outcome: str = "pending"
    install: bool = True


class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        mode: RunMode | str = RunMode.AGENT,
        seed: int = 0,
        *,
        record_trace: bool = False,
        check_invariants: bool = False,
    ):
        self.scenario = scenario
        self.mode = RunMode(mode)
        self.seed = seed
        self.params = p = scenario.params
        self.agent_mode = self.mode is RunMode.AGENT
        self.topo = scenario.topology.copy()
        self.end = seconds_to_ns(scenario.duration)
        self.now = 0
        self._heap: list = []
        self._seq = itertools.count()
        self.trace: list | None = [] if record_trace else None
        self.check = check_invariants

        self.nodes = {n: NodeState(n, p.queue_capacity) for n in self.topo.nodes}
        self.tables = {n: s.routing_table for n, s in self.nodes.items()}
        self._install_tables(baseline_route(self.topo, 0))
        self._busy: dict[tuple, bool] = {}
        self._tx_end: dict[tuple, int] = {}

        self.flows = list(scenario.flows)
        self.packets: list[Packet] = []
        self.control_bits = 0
        self.data_bits = 0
        self.reroute_log: list[RerouteRound] = []
        self.reroutes_by_key: dict[tuple, int] = {}

        self._ids = itertools.count()
        self.patrols: list[ag.MobileAgent] = []
        self._rngs: dict[int, Random] = {}
        self._recent = {n: [dict() for _ in CLASSES] for n in self.topo.nodes}
        self._streak = {n: [0] * len(CLASSES) for n in self.topo.nodes}
        self._last_broadcast = {n: -(10**18) for n in self.topo.nodes}
        self._trigger_pending: set[NodeId] = set()
        self._holddown: dict[tuple, int] = {}
        self._rounds: dict[tuple, RerouteRound] = {}
        self._probe_round: dict[int, RerouteRound] = {}
        self._dist_cache: dict[NodeId, dict] = {}

        self._interval = seconds_to_ns(p.propagation_interval_ms / 1e3)
        self._step = seconds_to_ns(p.patrol_step_ms / 1e3)
        self._holddown_ns = seconds_to_ns(p.reroute_holddown_ms / 1e3)

        self._handlers: list[Callable] = [
            self._on_arrival,
            self._on_transmit_done,
            self._on_agent_step,
            self._on_broadcast,
            self._on_probe_timeout,
            self._on_link_event,
            self._on_flow_start,
            self._on_flow_stop,
            lambda payload: None,
        ]
        self._started = False

    # -- scheduling

    def _push(self, at: int, kind: EventKind, payload) -> None:
        heapq.heappush(self._heap, (at, next(self._seq), kind, payload))

    def rng(self, name: str) -> Random:
        """Independent stream per named consumer, derived from the run seed."""
        return Random(f"{self.seed}/{name}")

    def _setup(self) -> None:
        traffic = self.rng("traffic")
        self._first_packet = []
        for i, flow in enumerate(self.flows):
            interval = flow.packet_size * NS / flow.rate
            first = seconds_to_ns(flow.start) + int(traffic.random() * interval)
            self._first_packet.append(first)
            self._push(first, EventKind.FLOW_START, (i, 0))
            if math.isfinite(flow.stop):
                self._push(seconds_to_ns(flow.stop), EventKind.FLOW_STOP, i)
        for ev in self.topo.events:
            self._push(seconds_to_ns(ev.at), EventKind.LINK_EVENT, ev)
        if not self.agent_mode:
            return
        for home in self.topo.nodes:
            agent = ag.MobileAgent.patrol(home, next(self._ids), self.params.history_limit)
            rng = self.rng(f"patrol/{home}")
            self._rngs[agent.agent_id] = rng
            self.patrols.append(agent)
            start = rng.randrange(self._step)
            agent.record(home, start, self.nodes[home].snapshot(start, *self._thresholds))
            self._push(start, EventKind.AGENT_STEP, agent)
        for i, n in enumerate(self.topo.nodes):
            self._push((i * self._interval) // len(self.topo.nodes), EventKind.CONGESTION_BROADCAST, (n, True))

    @property
    def _thresholds(self):
        return self.params.low_threshold, self.params.high_threshold

    def start(self) -> None:
        if self._started:
            raise RuntimeError("simulation already started")
        self._started = True
        self._setup()

    def advance(self, until: int, stop: Callable[[], bool] | None = None) -> None:
        """Process events strictly before ``until`` ns (or until ``stop()`` holds)."""
        heap = self._heap
        handlers = self._handlers
        trace = self.trace
        check = self.check
        pop = heapq.heappop
        while heap:
            at, _, kind, payload = heap[0]
            if at >= until:
                break
            pop(heap)
            self.now = at
            if trace is not None:
                trace.append((at, int(kind), _describe(payload)))
            handlers[kind](payload)
            if check:
                self._check()
            if stop is not None and stop():
                return

    def run(self) -> Metrics:
        self.start()
        self.advance(self.end)
        self.now = self.end
        return self.collect_metrics()

    def probe(self, path, probe_size: int | None = None) -> ag.ProbeResult:
        """Send one probe source-routed along ``path`` now and wait for it.

        Raises AllProbesFailed if it is dropped, dead-ends or times out.
        """
        if not self._started:
            self.start()
        path = tuple(path)
        size = probe_size or self.params.probe_size_bits
        ctx = ag.ProbeContext(path[0], path[-1], path[-2], [path[0]], size, route_prefix=path)
        agent = ag.MobileAgent(next(self._ids), ag.Mode.PROBE, path[0], path[0], probe_ctx=ctx)
        rnd = RerouteRound((path[0], path[-1]), path[-2], path[-1], self.now, install=False)
        self._launch_probe(rnd, agent)
        self.advance(10**30, stop=lambda: not rnd.pending)
        if not rnd.results:
            raise ag.AllProbesFailed(f"probe along {path} failed")
        return rnd.results[0]

    # -- queues and links

    def _enqueue(self, u: NodeId, v: NodeId, pkt: Packet) -> bool:
        node = self.nodes[u]
        q = node.queues[pkt.cls]
        was_empty = q.length == 0
        if enqueue_packet(node, pkt, v) is Admission.DROPPED:
            return False
        if was_empty and pkt.kind == FrameKind.DATA and self.agent_mode and u not in self._trigger_pending:
            self._traffic_changed(u)
        if not self._busy.get((u, v)):
            self._start_tx(u, v)
        return True

    def _traffic_changed(self, u: NodeId) -> None:
        """A data class queue at ``u`` went empty or non-empty: schedule a triggered report."""
        if u in self._trigger_pending or self.now - self._last_broadcast[u] < self._interval:
            # triggered updates are held down to one per interval
            return
        self._trigger_pending.add(u)
        self._push(self.now, EventKind.CONGESTION_BROADCAST, (u, False))

    def _start_tx(self, u: NodeId, v: NodeId) -> None:
        node = self.nodes[u]
        pkt = service_next(node, v)
        if pkt is None:
            return
        if pkt.kind == FrameKind.DATA and self.agent_mode and node.queues[pkt.cls].length == 0 and u not in self._trigger_pending:
            self._traffic_changed(u)
        link = self.topo.link(u, v)
        self._busy[(u, v)] = True
        done = self.now + tx_time_ns(pkt.size, link.rate)
        if self.check:
            assert self._tx_end.get((u, v), 0) <= self.now, "overlapping transmissions"
            self._tx_end[(u, v)] = done
        if pkt.kind == FrameKind.DATA:
            self.data_bits += pkt.size
        else:
            self.control_bits += pkt.size
        self._push(done, EventKind.TRANSMIT_DONE, (u, v, pkt))

    def _on_transmit_done(self, payload) -> None:
        u, v, pkt = payload
        self._busy[(u, v)] = False
        if not self.topo.has_link(u, v):
            self._lost(pkt, u)
            return
        prop = self.topo.link(u, v).propagation_delay
        if prop > 0:
            self._push(self.now + seconds_to_ns(prop), EventKind.PACKET_ARRIVAL, (u, v, pkt))
        else:
            self._arrive(u, v, pkt)
        if not self._busy.get((u, v)) and self._has_work(u, v):
            self._start_tx(u, v)

    def _has_work(self, u: NodeId, v: NodeId) -> bool:
        for q in self.nodes[u].queues:
            if q.lanes.get(v):
                return True
        return False

    def _on_arrival(self, payload) -> None:
        self._arrive(*payload)

    def _arrive(self, u: NodeId, v: NodeId, pkt: Packet) -> None:
        kind = pkt.kind
        if kind == FrameKind.DATA:
            pkt.trace.append(v)
            self._route_data(v, pkt)
        elif kind == FrameKind.PATROL:
            self._patrol_arrived(pkt.payload, u, v)
        elif kind == FrameKind.REPORT:
            ag.receive_report(self.nodes[v], u, pkt.payload, self.now)
        else:
            self._probe_arrived(pkt.payload, v)

    def _lost(self, pkt: Packet, at: NodeId) -> None:
        kind = pkt.kind
        if kind == FrameKind.DATA:
            self._drop(pkt, DROPPED_NOROUTE)
        elif kind == FrameKind.PATROL:
            self._push(self.now + self._step, EventKind.AGENT_STEP, pkt.payload)
        elif kind == FrameKind.PROBE:
            self._probe_failed(pkt.payload, "lost")

    # -- data plane

    def _on_flow_start(self, payload) -> None:
        i, seq = payload
        flow = self.flows[i]
        if self.now >= seconds_to_ns(flow.stop):
            return
        pkt = Packet(FrameKind.DATA, flow.packet_size, flow.cls, flow.src, flow.dst, self.now, i, seq)
        self.packets.append(pkt)
        nxt = self._first_packet[i] + round((seq + 1) * flow.packet_size * NS / flow.rate)
        self._push(nxt, EventKind.FLOW_START, (i, seq + 1))
        self._route_data(flow.src, pkt)

    def _on_flow_stop(self, i) -> None:
        pass

    def _route_data(self, u: NodeId, pkt: Packet) -> None:
        if u == pkt.dst:
            pkt.outcome = DELIVERED
            pkt.delivered_at = self.now
            return
        node = self.nodes[u]
        if len(pkt.trace) > self.params.ttl_hops:
            self._drop(pkt, DROPPED_NOROUTE)
            return
        try:
            nh = forward(node, pkt)
        except NoRoute:
            self._drop(pkt, DROPPED_NOROUTE)
            return
        if self.agent_mode:
            self._recent[u][pkt.cls][(pkt.src, pkt.dst)] = (pkt.trace, len(pkt.trace), nh)
        if not self._enqueue(u, nh, pkt):
            self._drop(pkt, DROPPED_QUEUE)

    def _drop(self, pkt: Packet, outcome: int) -> None:
        pkt.outcome = outcome

    # -- patrol agents

    def _on_agent_step(self, agent: ag.MobileAgent) -> None:
        u = agent.location
        nbrs = self.topo.neighbors(u)
        if not nbrs:
            self._push(self.now + self._step, EventKind.AGENT_STEP, agent)
            return
        v = ag.patrol_step(agent, nbrs, self._rngs[agent.agent_id])
        frame = Packet(FrameKind.PATROL, self.params.control_frame_bits, TrafficClass.VOICE, u, v, self.now, payload=agent)
        if not self._enqueue(u, v, frame):
            self._push(self.now + self._step, EventKind.AGENT_STEP, agent)

    def _patrol_arrived(self, agent: ag.MobileAgent, u: NodeId, v: NodeId) -> None:
        node = self.nodes[v]
        observed = node.snapshot(self.now, *self._thresholds)
        ag.arrive(agent, v, self.now, observed, self.topo.rate(u, v))
        ag.update_routing_table(node, agent, live=self.topo.neighbors(v))
        self._push(self.now + self._step, EventKind.AGENT_STEP, agent)

    # -- congestion reports and reroute trigger

    def _on_broadcast(self, payload) -> None:
        u, periodic = payload
        node = self.nodes[u]
        if periodic:
            self._push(self.now + self._interval, EventKind.CONGESTION_BROADCAST, (u, True))
        else:
            self._trigger_pending.discard(u)
            if self.now - self._last_broadcast[u] < self._interval:
                return
        self._last_broadcast[u] = self.now
        msgs = ag.propagate_congestion(node, self.topo.neighbors(u), self.now, *self._thresholds)
        size = self.params.report_frame_bits
        for v, report in msgs:
            frame = Packet(FrameKind.REPORT, size, TrafficClass.VOICE, u, v, self.now, payload=report)
            self._enqueue(u, v, frame)
        if periodic:
            self._check_reroute(u, node.congestion)

    def _check_reroute(self, u: NodeId, report) -> None:
        streak = self._streak[u]
        recent = self._recent[u]
        for cls in CLASSES:
            if report.levels[cls] is Level.HIGH:
                streak[cls] += 1
            else:
                streak[cls] = 0
            seen = recent[cls]
            if streak[cls] >= self.params.reroute_streak:
                for key, (trace, k, nh) in sorted(seen.items()):
                    self._maybe_reroute(u, key, trace[:k], nh)
            recent[cls] = {}

    def _maybe_reroute(self, u: NodeId, key, upstream: list, nh: NodeId) -> None:
        if key in self._rounds or self._holddown.get(key, -1) > self.now:
            return
        try:
            flagged = detect_mismatch(upstream + [nh], self.topo)
        except MissingLink:
            return
        if u not in flagged:
            return
        self._holddown[key] = self.now + self._holddown_ns
        rnd = RerouteRound(key, u, nh, self.now)
        self.reroute_log.append(rnd)
        try:
            clones = ag.initiate_reroute(
                u, nh, key[1], self.topo, upstream_path=upstream, probe_size=self.params.probe_size_bits, ids=self._ids
            )
        except ag.NoAlternative:
            rnd.outcome = "no-alternative"
            return
        self._rounds[key] = rnd
        log.debug("t=%d %s flags %s->%s for %s, %d probes", self.now, u, u, nh, key, len(clones))
        for probe in clones:
            self._launch_probe(rnd, probe)
        if not rnd.pending:
            self._finish_round(rnd)

    # -- probes

    def _dist(self, dest: NodeId) -> dict:
        d = self._dist_cache.get(dest)
        if d is None:
            d = self._dist_cache[dest] = ag.hop_distances(self.topo, dest)
        return d

    def idle_path(self, ctx: ag.ProbeContext) -> list[NodeId] | None:
        """The route a probe would take right now, or None if it would dead-end."""
        shadow = ag.ProbeContext(ctx.source, ctx.destination, ctx.divergence_node, [ctx.source], ctx.probe_size, 0, ctx.route_prefix)
        here = ctx.source
        while here != ctx.destination:
            try:
                here = ag.choose_probe_hop(shadow, here, self.topo, self.tables, self._dist(ctx.destination))
            except ag.DeadEnd:
                return None
            shadow.path_so_far.append(here)
        return shadow.path_so_far

    def idle_delay_ns(self, path: list[NodeId], size: int) -> int:
        total = 0
        for u, v in zip(path, path[1:]):
            link = self.topo.link(u, v)
            total += tx_time_ns(size, link.rate) + seconds_to_ns(link.propagation_delay)
        return total

    def _launch_probe(self, rnd: RerouteRound, probe: ag.MobileAgent) -> None:
        ctx = probe.probe_ctx
        ctx.injected_at = self.now
        predicted = self.idle_path(ctx)
        if predicted is None:
            rnd.failed += 1
            return
        rnd.pending.add(probe.agent_id)
        self._probe_round[probe.agent_id] = rnd
        timeout = self.now + math.ceil(self.params.probe_timeout_factor * self.idle_delay_ns(predicted, ctx.probe_size))
        self._push(timeout, EventKind.PROBE_TIMEOUT, probe)
        self._probe_forward(probe, ctx.source)

    def _probe_forward(self, probe: ag.MobileAgent, here: NodeId) -> None:
        ctx = probe.probe_ctx
        try:
            nxt = ag.choose_probe_hop(ctx, here, self.topo, self.tables, self._dist(ctx.destination))
        except ag.DeadEnd:
            self._probe_failed(probe, "dead-end")
            return
        frame = Packet(FrameKind.PROBE, ctx.probe_size, TrafficClass.VOICE, here, nxt, self.now, payload=probe)
        if not self._enqueue(here, nxt, frame):
            self._probe_failed(probe, "queue")

    def _probe_arrived(self, probe: ag.MobileAgent, v: NodeId) -> None:
        rnd = self._probe_round.get(probe.agent_id)
        if rnd is None or probe.agent_id not in rnd.pending:
            return
        ctx = probe.probe_ctx
        ctx.path_so_far.append(v)
        probe.location = v
        if v != ctx.destination:
            self._probe_forward(probe, v)
            return
        rnd.pending.discard(probe.agent_id)
        rnd.results.append(ag.measure_path_rate(ctx, self.now))
        if not rnd.pending:
            self._finish_round(rnd)

    def _probe_failed(self, probe: ag.MobileAgent, why: str) -> None:
        rnd = self._probe_round.get(probe.agent_id)
        if rnd is None or probe.agent_id not in rnd.pending:
            return
        rnd.pending.discard(probe.agent_id)
        rnd.failed += 1
        if not rnd.pending:
            self._finish_round(rnd)

    def _on_probe_timeout(self, probe: ag.MobileAgent) -> None:
        self._probe_failed(probe, "timeout")

    def _finish_round(self, rnd: RerouteRound) -> None:
        if not rnd.install:
            rnd.outcome = "measured" if rnd.results else "all-failed"
            return
        self._rounds.pop(rnd.key, None)
        try:
            winner = ag.select_path(rnd.results)
            ag.install_path(winner, self.tables, self.topo, self.now)
        except ag.AllProbesFailed:
            rnd.outcome = "all-failed"
            return
        except ag.StalePath:
            rnd.outcome = "stale"
            return
        rnd.winner = winner
        rnd.outcome = "installed"
        self.reroutes_by_key[rnd.key] = self.reroutes_by_key.get(rnd.key, 0) + 1
        self._holddown[rnd.key] = self.now + self._holddown_ns

    # -- topology changes

    def _on_link_event(self, ev) -> None:
        self.topo.apply(ev)
        self._dist_cache.clear()
        if ev.kind != "down":
            if not self.agent_mode:
                self._install_tables(baseline_route(self.topo, self.now))
            return
        a, b = ev.a, ev.b
        for u, v in ((a, b), (b, a)):
            self.nodes[u].neighbor_views.pop(v, None)
        if self.agent_mode:
            for u, v in ((a, b), (b, a)):
                self.tables[u].drop_next_hop(v)
        else:
            self._install_tables(baseline_route(self.topo, self.now))
        for u, v in ((a, b), (b, a)):
            node = self.nodes[u]
            stranded = []
            for cls in SERVICE_ORDER:
                stranded.extend(node.queues[cls].drain(v))
            for pkt in stranded:
                if pkt.kind == FrameKind.DATA:
                    self._route_data(u, pkt)
                else:
                    self._lost(pkt, u)

    def _install_tables(self, fresh: dict[NodeId, RoutingTable]) -> None:
        for n, table in self.tables.items():
            table.entries = fresh[n].entries

    # -- invariants

    def _check(self) -> None:
        for n, table in self.tables.items():
            for dest, entry in table.entries.items():
                assert self.topo.has_link(n, entry.next_hop), f"{n} routes {dest} via non-neighbour {entry.next_hop}"
                assert entry.next_hop != n
            node = self.nodes[n]
            for q in node.queues:
                assert q.length <= q.capacity
            assert set(node.neighbor_views) <= set(self.topo.neighbors(n))

    # -- metrics

    def collect_metrics(self, since: float = 0.0, until: float | None = None) -> Metrics:
        """Aggregate over data packets created in ``[since, until)`` seconds."""
        t0 = seconds_to_ns(since)
        t1 = self.end if until is None else seconds_to_ns(until)
        window = max(t1 - t0, 1) / NS
        per_flow = [FlowMetrics(f.id or f"f{i}") for i, f in enumerate(self.flows)]
        delays: list[list[int]] = [[] for _ in self.flows]
        bits = [0] * len(self.flows)
        for pkt in self.packets:
            if not t0 <= pkt.created_at < t1:
                continue
            fm = per_flow[pkt.flow]
            fm.sent += 1
            if pkt.outcome == DELIVERED:
                fm.delivered += 1
                delays[pkt.flow].append(pkt.delivered_at - pkt.created_at)
                bits[pkt.flow] += pkt.size
            elif pkt.outcome == DROPPED_QUEUE:
                fm.dropped_queue += 1
            elif pkt.outcome == DROPPED_NOROUTE:
                fm.dropped_noroute += 1
            else:
                fm.in_flight += 1
        totals = FlowMetrics(TOTAL_ID)
        all_delays: list[int] = []
        for i, (fm, flow) in enumerate(zip(per_flow, self.flows)):
            _finish(fm, delays[i], bits[i], window)
            fm.reroutes = self.reroutes_by_key.get((flow.src, flow.dst), 0)
            for name in ("sent", "delivered", "dropped_queue", "dropped_noroute", "in_flight"):
                setattr(totals, name, getattr(totals, name) + getattr(fm, name))
            all_delays.extend(delays[i])
        _finish(totals, all_delays, sum(bits), window)
        total_bits = self.control_bits + self.data_bits
        totals.reroutes = sum(self.reroutes_by_key.values())
        return Metrics(
            run_id=f"{self.scenario.name}/{self.mode.value}/{self.seed}",
            mode=self.mode.value,
            seed=self.seed,
            duration_s=self.scenario.duration,
            flows=per_flow,
            totals=totals,
            agent_overhead_ratio=self.control_bits / total_bits if total_bits else 0.0,
            control_bits=self.control_bits,
            data_bits=self.data_bits,
            reroutes=totals.reroutes,
        )

    def installed_paths(self) -> list[tuple[NodeId, ...]]:
        return [r.winner.path for r in self.reroute_log if r.winner is not None]

    def route(self, src: NodeId, dst: NodeId) -> list[NodeId] | None:
        """Follow the current tables from ``src``; None on a gap or loop."""
        path = [src]
        while path[-1] != dst:
            entry = self.tables[path[-1]].get(dst)
            if entry is None or entry.next_hop in path:
                return None
            path.append(entry.next_hop)
        return path


def _finish(fm: FlowMetrics, delays: list[int], bits: int, window: float) -> None:
    fm.loss_rate = loss_ratio(fm.sent, fm.delivered, fm.dropped, fm.in_flight)
    if delays:
        delays.sort()
        fm.mean_delay_ms = sum(delays) / len(delays) / 1e6
        fm.p95_delay_ms = nearest_rank(delays, 95) / 1e6
    fm.goodput_bps = bits / window


def _describe(payload):
    if isinstance(payload, tuple) and len(payload) == 3 and isinstance(payload[2], Packet):
        u, v, pkt = payload
        return (u, v, int(pkt.kind), pkt.flow, pkt.seq)
    if isinstance(payload, ag.MobileAgent):
        return ("agent", payload.agent_id, payload.location)
    return repr(payload)


def run(scenario: Scenario, mode: RunMode | str = RunMode.AGENT, seed: int = 0) -> Metrics:
    return Simulation(scenario, mode, seed).run()
