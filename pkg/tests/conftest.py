from __future__ import annotations

import random
from dataclasses import replace

import pytest

from manet_agents import canonical_scenario
from manet_agents.net_model import RATES_80211B, Link, LinkEvent, Topology, TrafficClass
from manet_agents.scenario import Flow, Params, Scenario

MBPS = 1e6


@pytest.fixture(scope="session")
def canonical() -> Scenario:
    return canonical_scenario()


@pytest.fixture
def canonical_topo(canonical) -> Topology:
    return canonical.topology.copy()


def line_topology(rates, prop=0.0) -> tuple[Topology, list[str]]:
    names = [f"n{i}" for i in range(len(rates) + 1)]
    links = [Link(a, b, r, prop) for a, b, r in zip(names, names[1:], rates)]
    return Topology(names, links), names


def short(scenario: Scenario, duration: float) -> Scenario:
    flows = [replace(f, stop=min(f.stop, duration)) for f in scenario.flows]
    return replace(scenario, duration=duration, flows=flows)


def random_scenario(seed: int, *, n_nodes=None, duration=None, with_events=True) -> Scenario:
    """Small random connected-ish multi-rate scenario for property runs."""
    rng = random.Random(seed)
    n = n_nodes or rng.randint(2, 7)
    names = [f"n{i}" for i in range(n)]
    pairs = set()
    for i in range(1, n):
        pairs.add((names[rng.randrange(i)], names[i]))
    for _ in range(rng.randint(0, n)):
        a, b = rng.sample(names, 2) if n > 1 else (names[0], names[0])
        if a != b and (a, b) not in pairs and (b, a) not in pairs:
            pairs.add((a, b))
    links = [Link(a, b, rng.choice(RATES_80211B), rng.choice([0.0, 0.0, 1e-4])) for a, b in sorted(pairs)]
    events = []
    if with_events and links:
        for _ in range(rng.randint(0, 3)):
            l = rng.choice(links)
            kind = rng.choice(["down", "up", "rate"])
            events.append(LinkEvent(round(rng.uniform(0, 0.4), 3), kind, l.a, l.b, rng.choice(RATES_80211B) if kind == "rate" else None))
    duration = duration or 0.5
    flows = []
    for k in range(rng.randint(0, 3)):
        src, dst = rng.sample(names, 2)
        flows.append(
            Flow(
                src,
                dst,
                rng.choice(list(TrafficClass)),
                rng.choice([0.2, 1.0, 3.0, 8.0]) * MBPS,
                rng.choice([1000, 8000, 12000]),
                round(rng.uniform(0, 0.2), 3),
                duration,
                f"f{k}",
            )
        )
    params = Params(queue_capacity=rng.choice([5, 20, 50]))
    return Scenario(f"random-{seed}", duration, Topology(names, links, events), flows, params)
