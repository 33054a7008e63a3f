from __future__ import annotations

import itertools
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from manet_agents.agents import (
    ARRIVED,
    AllProbesFailed,
    DeadEnd,
    Isolated,
    MobileAgent,
    Mode,
    NoAlternative,
    ProbeContext,
    ProbeResult,
    StalePath,
    ZeroDelay,
    hop_distances,
    initiate_reroute,
    install_path,
    measure_path_rate,
    patrol_step,
    probe_advance,
    propagate_congestion,
    receive_report,
    select_path,
    update_routing_table,
)
from manet_agents.engine import Simulation, baseline_route
from manet_agents.net_model import (
    CongestionReport,
    Level,
    Link,
    LinkEvent,
    NodeState,
    RouteEntry,
    Topology,
    TrafficClass,
)
from manet_agents.scenario import Scenario

from conftest import MBPS, line_topology

IDLE = CongestionReport.idle()
HOT = CongestionReport((0.0, 0.9, 0.0, 0.0), (Level.LOW, Level.HIGH, Level.LOW, Level.LOW))


def walk(nodes, rates=None, reports=None, t0=1):
    """Patrol agent that has visited ``nodes`` in order, one ns apart."""
    agent = MobileAgent.patrol(nodes[0])
    for k, n in enumerate(nodes):
        via = None if k == 0 else (rates[k - 1] if rates else 1 * MBPS)
        rep = reports.get(n, IDLE) if reports else IDLE
        agent.record(n, t0 + k, rep, via)
    return agent


def loop_erased_oracle(names):
    """Chronological loop erasure of a node-name sequence."""
    out: list[str] = []
    for name in names:
        if name in out:
            out = out[: out.index(name) + 1]
        else:
            out.append(name)
    return out


# -- patrol


def test_patrol_step_isolated():
    with pytest.raises(Isolated):
        patrol_step(MobileAgent.patrol("A"), [], random.Random(0))


def test_patrol_step_single_neighbour():
    assert patrol_step(MobileAgent.patrol("A"), ["B"], random.Random(0)) == "B"


def test_patrol_uniform_on_star():
    agent = MobileAgent.patrol("hub")
    rng = random.Random(7)
    leaves = [f"L{i}" for i in range(5)]
    counts = Counter(patrol_step(agent, leaves, rng) for _ in range(30_000))
    _, p = chisquare([counts[l] for l in leaves])
    assert p > 0.01


def test_patrol_covers_connected_graph():
    # every node visited within 10 000 steps on <= 12-node connected graphs
    for seed in range(100):
        rng = random.Random(seed)
        n = rng.randint(2, 12)
        names = [f"v{i}" for i in range(n)]
        links = [Link(names[rng.randrange(i)], names[i], 1e6) for i in range(1, n)]
        topo = Topology(names, links)
        agent = MobileAgent.patrol(names[0])
        here, seen = names[0], {names[0]}
        for _ in range(10_000):
            here = patrol_step(agent, topo.neighbors(here), rng)
            seen.add(here)
            if len(seen) == n:
                break
        assert len(seen) == n, seed


def test_history_times_strictly_increase():
    agent = MobileAgent.patrol("A")
    agent.record("A", 5, IDLE)
    with pytest.raises(ValueError):
        agent.record("B", 5, IDLE, 1e6)


def test_history_is_bounded():
    agent = MobileAgent.patrol("A", history_limit=4)
    for t in range(10):
        agent.record("AB"[t % 2], t + 1, IDLE, 1e6)
    assert len(agent.history) == 4


def test_probe_agents_need_context():
    with pytest.raises(ValueError):
        MobileAgent(1, Mode.PROBE, "A", "A")


# -- update_routing_table


def test_update_empty_history_changes_nothing():
    node = NodeState("A")
    assert update_routing_table(node, MobileAgent.patrol("A")) == 0
    assert len(node.routing_table) == 0


def test_update_two_step_walk():
    node = NodeState("A")
    node.routing_table.set("H", RouteEntry("Z", 1e6, False, 0))
    agent = walk(["H", "A"], rates=[2 * MBPS], reports={"H": HOT})
    assert update_routing_table(node, agent) >= 1
    entry = node.routing_table.get("H")
    assert entry.next_hop == "H"
    assert entry.est_path_rate == 2 * MBPS
    assert entry.congested is True
    assert entry.updated_at == 1


def test_update_stale_info_is_ignored():
    node = NodeState("A")
    node.routing_table.set("H", RouteEntry("Z", 1e6, False, 100))
    assert update_routing_table(node, walk(["H", "A"])) == 0
    assert node.routing_table.get("H").next_hop == "Z"


def test_update_erases_loops_and_takes_segment_bottleneck():
    nodes = ["D", "C", "B", "X", "B", "A"]
    rates = [11e6, 5.5e6, 1e6, 1e6, 2e6]
    node = NodeState("A")
    update_routing_table(node, walk(nodes, rates))
    table = node.routing_table
    # loop B-X-B is erased: A reaches D via B, C
    assert table.get("D").next_hop == "B"
    assert table.get("D").est_path_rate == min(2e6, 5.5e6, 11e6)
    assert table.get("X").next_hop == "B"
    assert table.get("X").est_path_rate == 1e6
    assert "A" not in table.entries


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 100_000))
def test_update_matches_loop_erasure_oracle(seed):
    rng = random.Random(seed)
    names = "ABCDE"
    link_rate = {frozenset(p): rng.choice([1e6, 2e6, 5.5e6, 11e6]) for p in itertools.combinations(names, 2)}
    nodes = [rng.choice(names)]
    while len(nodes) < rng.randint(2, 14):
        nxt = rng.choice(names)
        if nxt != nodes[-1]:
            nodes.append(nxt)
    rates = [link_rate[frozenset(p)] for p in zip(nodes, nodes[1:])]
    reports = {n: rng.choice([IDLE, HOT]) for n in names}
    here = nodes[-1]
    node = NodeState(here)
    update_routing_table(node, walk(nodes, rates, reports))
    expected = {}
    for dest in set(nodes) - {here}:
        j = max(i for i, v in enumerate(nodes) if v == dest)
        path = loop_erased_oracle(nodes[j:][::-1])
        assert path[0] == here and path[-1] == dest
        rate = min(link_rate[frozenset(p)] for p in zip(path, path[1:]))
        congested = any(reports[n].any_high for n in path)
        expected[dest] = (path[1], rate, congested, 1 + j)
    got = {d: (e.next_hop, e.est_path_rate, e.congested, e.updated_at) for d, e in node.routing_table.entries.items()}
    assert got == expected


def test_update_respects_committed_routes():
    node = NodeState("F")
    node.routing_table.set("H", RouteEntry("G", 5.5e6, False, 0, committed=True))
    assert update_routing_table(node, walk(["H", "F"])) == 0
    assert node.routing_table.get("H").next_hop == "G"
    # refreshes the committed H entry and learns G
    assert update_routing_table(node, walk(["H", "G", "F"], t0=10)) == 2
    entry = node.routing_table.get("H")
    assert entry.next_hop == "G" and entry.committed and entry.updated_at == 10


def test_update_skips_dead_first_hop():
    node = NodeState("A")
    assert update_routing_table(node, walk(["H", "B", "A"]), live={"C"}) == 0


# -- congestion propagation


def test_propagate_congestion_broadcast():
    node = NodeState("A")
    assert propagate_congestion(node, [], 5) == []
    msgs = propagate_congestion(node, ["D", "B", "C"], 5)
    assert [m[0] for m in msgs] == ["B", "C", "D"]
    assert len({id(m[1]) for m in msgs}) == 1
    other = NodeState("B")
    receive_report(other, "A", msgs[0][1], 7)
    assert other.neighbor_views["A"] == (node.congestion, 7)


# -- initiate_reroute


def test_initiate_reroute_canonical(canonical_topo):
    clones = initiate_reroute("F", "H", "H", canonical_topo, upstream_path=["S", "B", "D", "F"])
    assert [c.probe_ctx.route_prefix[-1] for c in clones] == ["E", "G"]
    assert all(c.probe_ctx.divergence_node == "F" for c in clones)
    assert all(c.mode is Mode.PROBE and c.location == "S" for c in clones)


def test_initiate_reroute_no_alternative():
    topo = Topology("AB", [Link("A", "B", 1e6)])
    with pytest.raises(NoAlternative):
        initiate_reroute("A", "B", "B", topo)


def test_initiate_reroute_four_clones_share_lineage():
    hub_links = [Link("hub", x, 1e6) for x in ["up", "next", "a", "b", "c", "d"]]
    topo = Topology(["hub", "up", "next", "a", "b", "c", "d"], hub_links)
    clones = initiate_reroute("hub", "next", "next", topo, upstream_path=["up", "hub"], ids=itertools.count(100))
    assert len(clones) == 4
    assert len({c.agent_id for c in clones}) == 4
    assert len({c.lineage for c in clones}) == 1


# -- probe_advance


def _probe(prefix, dest, start=None):
    ctx = ProbeContext(prefix[0], dest, prefix[-2] if len(prefix) > 1 else prefix[0], [start or prefix[0]], 8000, route_prefix=tuple(prefix))
    return MobileAgent(1, Mode.PROBE, prefix[0], start or prefix[0], probe_ctx=ctx)


def test_probe_one_hop_arrival(canonical_topo):
    agent = _probe(["G"], "H")
    assert probe_advance(agent, canonical_topo, {}) is ARRIVED
    assert agent.probe_ctx.path_so_far == ["G", "H"]


def test_probe_dead_end():
    topo = Topology(["a", "b", "c", "t"], [Link("a", "b", 1e6), Link("b", "c", 1e6), Link("a", "t", 1e6)])
    names = ["a", "b", "c"]
    agent = _probe([names[1]], "t")
    agent.probe_ctx.path_so_far = [names[0], names[2], names[1]]
    with pytest.raises(DeadEnd):
        probe_advance(agent, topo, {})


def test_probe_via_e_follows_least_hop(canonical_topo):
    agent = _probe(["S", "B", "D", "F", "E"], "H")
    while probe_advance(agent, canonical_topo, {}) is not ARRIVED:
        pass
    assert agent.probe_ctx.path_so_far == ["S", "B", "D", "F", "E", "H"]


def test_probe_uses_loop_free_table_entry(canonical_topo):
    tables = baseline_route(canonical_topo)
    tables["G"].set("H", RouteEntry("F", 1e6, False, 1))  # would loop back
    agent = _probe(["S", "B", "D", "F", "G"], "H")
    while probe_advance(agent, canonical_topo, tables) is not ARRIVED:
        pass
    assert agent.probe_ctx.path_so_far == ["S", "B", "D", "F", "G", "H"]


def test_probe_least_hop_ties_by_id():
    links = [Link("s", "b", 1e6), Link("s", "a", 1e6), Link("a", "t", 1e6), Link("b", "t", 1e6)]
    topo = Topology("sabt", links)
    agent = _probe(["s"], "t")
    probe_advance(agent, topo, {})
    assert agent.location == "a"
    assert hop_distances(topo, "t") == {"t": 0, "a": 1, "b": 1, "s": 2}


# -- measure_path_rate


def test_measure_zero_delay():
    ctx = ProbeContext("A", "B", "A", ["A", "B"], 8000, injected_at=10)
    with pytest.raises(ZeroDelay):
        measure_path_rate(ctx, 10)


def test_measure_arithmetic():
    ctx = ProbeContext("A", "C", "A", ["A", "B", "C"], 8000, injected_at=1_000)
    res = measure_path_rate(ctx, 1_000 + 8_000_000)
    assert res.channel_delay == 0.008
    assert res.data_rate == pytest.approx(1e6)
    assert res.path == ("A", "B", "C") and res.hops == 2


def _sim_probe(topo, path):
    return Simulation(Scenario("probe", 1.0, topo), "baseline").probe(path)


def test_probe_single_11m_hop():
    topo, path = line_topology([11 * MBPS])
    res = _sim_probe(topo, path)
    assert res.channel_delay == pytest.approx(727.27e-6, rel=1e-4)
    assert res.data_rate == pytest.approx(11 * MBPS, rel=1e-6)


def test_probe_two_2m_hops():
    topo, path = line_topology([2 * MBPS, 2 * MBPS])
    res = _sim_probe(topo, path)
    assert res.channel_delay == pytest.approx(0.008)
    assert res.data_rate == pytest.approx(1 * MBPS)


@pytest.mark.parametrize(
    "path, rates",
    [
        (["S", "B", "D", "F", "E", "H"], [11, 11, 11, 2, 2]),
        (["S", "B", "D", "F", "G", "H"], [11, 11, 11, 5.5, 5.5]),
    ],
)
def test_probe_canonical_idle_paths(canonical, path, rates):
    oracle = 8000 / sum(8000 / (r * MBPS) for r in rates)
    res = Simulation(canonical.with_params(), "baseline").probe(path)
    assert res.data_rate == pytest.approx(oracle, rel=1e-3)


def test_probe_never_beats_bottleneck(canonical_topo):
    from manet_agents.net_model import bottleneck_rate

    for path in (["S", "B"], ["S", "B", "D"], ["S", "C"], ["F", "G", "H"], ["B", "D", "F", "H"]):
        res = _sim_probe(canonical_topo, path)
        bott = bottleneck_rate(path, canonical_topo)
        if len(path) == 2:
            assert res.data_rate == pytest.approx(bott, rel=1e-6)
        else:
            assert res.data_rate < bott


# -- select_path


def _res(path, rate):
    return ProbeResult(tuple(path), 8000 / rate, rate)


def test_select_prefers_faster_detour():
    p1 = _res("SBDFEH", 0.786e6)
    p2 = _res("SBDFGH", 1.571e6)
    assert select_path([p1, p2]) is p2


def test_select_single_and_empty():
    only = _res("AB", 1e6)
    assert select_path([only]) is only
    with pytest.raises(AllProbesFailed):
        select_path([])


def test_select_tie_breaks():
    five = _res("SABCDT", 1e6)
    six = _res("SABCDET", 1e6)
    assert select_path([six, five]) is five
    x = _res("SXT", 1e6)
    y = _res("SAT", 1e6)
    assert select_path([x, y]) is y


@given(st.lists(st.tuples(st.sampled_from(["SAT", "SBT", "SABT", "SCT", "SACT"]), st.sampled_from([1e6, 2e6])), min_size=1, max_size=6), st.randoms())
def test_select_order_invariant(items, rnd):
    results = [_res(p, r) for p, r in items]
    shuffled = results[:]
    rnd.shuffle(shuffled)
    assert select_path(results) == select_path(shuffled)


# -- install_path


def test_install_canonical_winner(canonical_topo):
    tables = baseline_route(canonical_topo)
    winner = _res("SBDFGH", 1.571e6)
    assert install_path(winner, tables, canonical_topo, 1000) == 5
    assert tables["F"].get("H").next_hop == "G"
    assert all(tables[n].get("H").est_path_rate == 1.571e6 for n in "SBDFG")
    assert all(tables[n].get("H").updated_at == 1000 for n in "SBDFG")


def test_install_stale_path(canonical_topo):
    tables = baseline_route(canonical_topo)
    before = {n: dict(t.entries) for n, t in tables.items()}
    canonical_topo.apply(LinkEvent(0.5, "down", "G", "H"))
    with pytest.raises(StalePath):
        install_path(_res("SBDFGH", 1.571e6), tables, canonical_topo, 1000)
    assert {n: dict(t.entries) for n, t in tables.items()} == before


def test_reinstall_is_idempotent_but_fresher(canonical_topo):
    tables = baseline_route(canonical_topo)
    winner = _res("SBDFGH", 1.571e6)
    install_path(winner, tables, canonical_topo, 1000)
    first = {n: tables[n].get("H") for n in "SBDFG"}
    assert install_path(winner, tables, canonical_topo, 2000) == 5
    for n in "SBDFG":
        assert tables[n].get("H").next_hop == first[n].next_hop
        assert tables[n].get("H").updated_at == 2000 > first[n].updated_at
