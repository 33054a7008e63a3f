"""Multi-rate network graph, per-class queue accounting and congestion scoring."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

NodeId = str

MBPS = 1_000_000.0
RATES_80211B = (1 * MBPS, 2 * MBPS, 5.5 * MBPS, 11 * MBPS)


class NetModelError(Exception):
    pass


class MissingLink(NetModelError):
    pass


class PathTooShort(NetModelError):
    pass


class DomainError(NetModelError, ValueError):
    pass


class TopologyError(NetModelError, ValueError):
    pass


class TrafficClass(IntEnum):
    """Traffic classes in ascending delay sensitivity."""

    BACKGROUND = 0
    BEST_EFFORT = 1
    VIDEO = 2
    VOICE = 3

    @classmethod
    def parse(cls, name: str) -> TrafficClass:
        key = name.strip().upper().replace("-", "_").replace(" ", "_")
        if key == "BESTEFFORT":
            key = "BEST_EFFORT"
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown traffic class {name!r}") from None

    @property
    def label(self) -> str:
        return {0: "background", 1: "best_effort", 2: "video", 3: "voice"}[int(self)]


CLASSES = tuple(TrafficClass)
# Service order: most delay-sensitive first.
SERVICE_ORDER = tuple(reversed(CLASSES))


class Level(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2


PRIORITY_WEIGHTS = {
    TrafficClass.VOICE: 8,
    TrafficClass.VIDEO: 4,
    TrafficClass.BEST_EFFORT: 2,
    TrafficClass.BACKGROUND: 1,
}


@dataclass(frozen=True)
class Link:
    a: NodeId
    b: NodeId
    rate: float
    propagation_delay: float = 0.0

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"self-loop on node {self.a!r}")
        if not self.rate > 0:
            raise TopologyError(f"link {self.a}-{self.b}: rate must be positive, got {self.rate}")
        if self.propagation_delay < 0:
            raise TopologyError(f"link {self.a}-{self.b}: negative propagation delay")

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))

    def other(self, node: NodeId) -> NodeId:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class LinkEvent:
    """A timed topology change standing in for node mobility.

    ``kind`` is one of ``"down"``, ``"up"`` or ``"rate"``. ``up`` may carry a
    rate (and propagation delay) to bring a previously unknown link into being.
    """

    at: float
    kind: str
    a: NodeId
    b: NodeId
    rate: float | None = None
    propagation_delay: float | None = None

    def __post_init__(self):
        if self.kind not in ("down", "up", "rate"):
            raise TopologyError(f"unknown link event kind {self.kind!r}")
        if self.kind == "rate" and not (self.rate is not None and self.rate > 0):
            raise TopologyError("rate event needs a positive rate")
        if self.rate is not None and not self.rate > 0:
            raise TopologyError("link event rate must be positive")
        if self.at < 0:
            raise TopologyError("link event time must be non-negative")


class Topology:
    """Nodes plus undirected multi-rate links.

    ``links`` holds every link ever declared; ``down`` marks the ones that are
    currently not usable. Mutators are only called by the engine on its own copy.
    """

    def __init__(
        self,
        nodes: Iterable[NodeId],
        links: Iterable[Link] = (),
        events: Iterable[LinkEvent] = (),
    ):
        self.nodes: tuple[NodeId, ...] = tuple(sorted(set(nodes)))
        node_set = set(self.nodes)
        self.links: dict[frozenset, Link] = {}
        self.down: set[frozenset] = set()
        self._adj: dict[NodeId, dict[NodeId, Link]] = {n: {} for n in self.nodes}
        for link in links:
            for end in (link.a, link.b):
                if end not in node_set:
                    raise TopologyError(f"link {link.a}-{link.b} references undeclared node {end!r}")
            if link.key in self.links:
                raise TopologyError(f"duplicate link {link.a}-{link.b}")
            self.links[link.key] = link
            self._adj[link.a][link.b] = link
            self._adj[link.b][link.a] = link
        self.events: tuple[LinkEvent, ...] = tuple(sorted(events, key=lambda e: e.at))
        for ev in self.events:
            for end in (ev.a, ev.b):
                if end not in node_set:
                    raise TopologyError(f"link event references undeclared node {end!r}")
            if ev.a == ev.b:
                raise TopologyError(f"link event on self-loop {ev.a!r}")

    def copy(self) -> Topology:
        topo = Topology(self.nodes, self.links.values(), self.events)
        topo.down = set(self.down)
        for key in topo.down:
            a, b = tuple(key)
            topo._adj[a].pop(b, None)
            topo._adj[b].pop(a, None)
        return topo

    def neighbors(self, node: NodeId) -> list[NodeId]:
        """Live neighbours in ascending id order."""
        return sorted(self._adj[node])

    def link(self, u: NodeId, v: NodeId) -> Link:
        try:
            return self._adj[u][v]
        except KeyError:
            raise MissingLink(f"no live link {u}-{v}") from None

    def has_link(self, u: NodeId, v: NodeId) -> bool:
        return v in self._adj.get(u, ())

    def rate(self, u: NodeId, v: NodeId) -> float:
        return self.link(u, v).rate

    def live_links(self) -> list[Link]:
        return [l for k, l in self.links.items() if k not in self.down]

    # engine-side mutation

    def apply(self, event: LinkEvent) -> None:
        key = frozenset((event.a, event.b))
        old = self.links.get(key)
        if event.kind == "down":
            if old is None:
                return
            self.down.add(key)
            self._adj[event.a].pop(event.b, None)
            self._adj[event.b].pop(event.a, None)
            return
        if old is None:
            if event.rate is None:
                raise TopologyError(f"link {event.a}-{event.b} brought up without a rate")
            new = Link(event.a, event.b, event.rate, event.propagation_delay or 0.0)
        else:
            new = Link(
                old.a,
                old.b,
                event.rate if event.rate is not None else old.rate,
                event.propagation_delay if event.propagation_delay is not None else old.propagation_delay,
            )
        self.links[key] = new
        if event.kind == "up":
            self.down.discard(key)
        if key not in self.down:
            self._adj[new.a][new.b] = new
            self._adj[new.b][new.a] = new


def _hop_rates(path: Sequence[NodeId], topo: Topology) -> list[float]:
    if len(path) < 2:
        raise PathTooShort(f"path needs at least two nodes, got {list(path)}")
    return [topo.rate(u, v) for u, v in zip(path, path[1:])]


def bottleneck_rate(path: Sequence[NodeId], topo: Topology) -> float:
    """Minimum link rate along ``path``."""
    return min(_hop_rates(path, topo))


def detect_mismatch(path: Sequence[NodeId], topo: Topology) -> list[NodeId]:
    """Nodes heading a link slower than some earlier link of the path."""
    rates = _hop_rates(path, topo)
    flagged = []
    fastest = rates[0]
    for i in range(1, len(rates)):
        if rates[i] < fastest:
            flagged.append(path[i])
        fastest = max(fastest, rates[i])
    return flagged


def congestion_level(occupancy: float, low: float = 0.5, high: float = 0.8) -> Level:
    if not 0.0 <= occupancy <= 1.0:
        raise DomainError(f"occupancy must lie in [0, 1], got {occupancy}")
    if occupancy < low:
        return Level.LOW
    if occupancy < high:
        return Level.MEDIUM
    return Level.HIGH


@dataclass(frozen=True)
class CongestionReport:
    occupancy: tuple[float, ...]
    levels: tuple[Level, ...]
    measured_at: int = 0

    def level(self, cls: TrafficClass) -> Level:
        return self.levels[cls]

    @property
    def any_high(self) -> bool:
        return Level.HIGH in self.levels

    @classmethod
    def idle(cls, measured_at: int = 0) -> CongestionReport:
        return cls((0.0,) * len(CLASSES), (Level.LOW,) * len(CLASSES), measured_at)


def node_priority(report: CongestionReport) -> int:
    """Higher is better; 0 for a node with nothing queued."""
    return -sum(PRIORITY_WEIGHTS[c] * int(report.levels[c]) for c in CLASSES)


class ClassQueue:
    """Drop-tail FIFO for one traffic class.

    Items are kept in per-next-hop lanes so a link server can pull the oldest
    item headed its way; the capacity is shared by the whole class.
    """

    __slots__ = ("capacity", "length", "lanes")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.length = 0
        self.lanes: dict[NodeId, deque] = {}

    def offer(self, next_hop: NodeId, item) -> bool:
        if self.length >= self.capacity:
            return False
        lane = self.lanes.get(next_hop)
        if lane is None:
            lane = self.lanes[next_hop] = deque()
        lane.append(item)
        self.length += 1
        return True

    def pop(self, next_hop: NodeId):
        lane = self.lanes.get(next_hop)
        if not lane:
            return None
        self.length -= 1
        return lane.popleft()

    def drain(self, next_hop: NodeId) -> list:
        lane = self.lanes.pop(next_hop, None)
        if not lane:
            return []
        self.length -= len(lane)
        return list(lane)

    def __len__(self) -> int:
        return self.length


@dataclass
class RouteEntry:
    next_hop: NodeId
    est_path_rate: float
    congested: bool
    updated_at: int
    # True for routes installed by route computation or a completed probe round;
    # patrol walks only refresh those, never redirect them.
    committed: bool = False


@dataclass
class RoutingTable:
    owner: NodeId
    entries: dict[NodeId, RouteEntry] = field(default_factory=dict)

    def get(self, destination: NodeId) -> RouteEntry | None:
        return self.entries.get(destination)

    def set(self, destination: NodeId, entry: RouteEntry) -> None:
        if entry.next_hop == self.owner:
            raise ValueError(f"route at {self.owner} cannot point to itself")
        old = self.entries.get(destination)
        if old is not None and entry.updated_at < old.updated_at:
            raise ValueError("route timestamps must not go backwards")
        self.entries[destination] = entry

    def drop_next_hop(self, next_hop: NodeId) -> int:
        stale = [d for d, e in self.entries.items() if e.next_hop == next_hop]
        for d in stale:
            del self.entries[d]
        return len(stale)

    def __len__(self) -> int:
        return len(self.entries)


class NodeState:
    """Mutable per-node state owned by the simulation engine."""

    def __init__(self, node_id: NodeId, capacity: int | dict[TrafficClass, int] = 50):
        if isinstance(capacity, int):
            capacity = {c: capacity for c in CLASSES}
        self.id = node_id
        self.queues = [ClassQueue(capacity[c]) for c in CLASSES]
        self.congestion = CongestionReport.idle()
        self.priority = 0
        self.routing_table = RoutingTable(node_id)
        self.neighbor_views: dict[NodeId, tuple[CongestionReport, int]] = {}

    def snapshot(self, now: int, low: float = 0.5, high: float = 0.8) -> CongestionReport:
        occ = tuple(queue_occupancy(self, c) for c in CLASSES)
        return CongestionReport(occ, tuple(congestion_level(o, low, high) for o in occ), now)

    def report(self, now: int, low: float = 0.5, high: float = 0.8) -> CongestionReport:
        """Measure and keep a fresh report; this is what gets advertised."""
        rep = self.snapshot(now, low, high)
        self.congestion = rep
        self.priority = node_priority(rep)
        return rep


def queue_occupancy(node: NodeState, cls: TrafficClass) -> float:
    q = node.queues[cls]
    return q.length / q.capacity
