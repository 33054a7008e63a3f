"""
Relieving the F-H bottleneck
============================

One best-effort flow offers 4 Mbps from S to H. The shortest route
S-B-D-F-H ends on a 1 Mbps link, so the queue at F overflows.  In agent mode
F notices that its outgoing link is slower than the upstream ones, clones
probes through its other neighbours and the source switches to the fastest
path that comes back.
"""

from manet_agents import canonical_scenario
from manet_agents.engine import DELIVERED, Simulation

scenario = canonical_scenario()
SEED = 0

###############################################################################
# Run both modes
# --------------

runs = {}
for mode in ("baseline", "agent"):
    sim = Simulation(scenario, mode, SEED)
    metrics = sim.run()
    runs[mode] = (sim, metrics)
    t = metrics.totals
    print(
        f"{mode:<9} loss {t.loss_rate:6.3f}  goodput {t.goodput_bps / 1e6:5.2f} Mbps  "
        f"mean delay {t.mean_delay_ms:8.1f} ms  overhead {metrics.agent_overhead_ratio:.4f}"
    )

###############################################################################
# What the agents did
# -------------------
# Each reroute round lists the probes that came back and the winner.

sim, _ = runs["agent"]
for rnd in sim.reroute_log:
    print(f"\nround at t={rnd.started_at / 1e9:.3f} s: detector {rnd.detector}, slow next hop {rnd.congested_next_hop}, outcome {rnd.outcome}")
    for res in sorted(rnd.results, key=lambda r: -r.data_rate):
        print(f"  {'-'.join(res.path):<14} {res.data_rate / 1e6:6.3f} Mbps")
print("route now:", "-".join(sim.route("S", "H")))

###############################################################################
# Goodput second by second
# ------------------------
# Delivered bits per one-second bucket, by creation time.

print(f"\n{'second':>6}{'baseline':>10}{'agent':>8}")
buckets = {mode: [0] * int(scenario.duration) for mode in runs}
for mode, (s, _) in runs.items():
    for p in s.packets:
        if p.outcome == DELIVERED:
            buckets[mode][min(p.created_at // 10**9, len(buckets[mode]) - 1)] += p.size
for sec in range(0, int(scenario.duration), 3):
    print(f"{sec:>6}{buckets['baseline'][sec] / 1e6:>10.2f}{buckets['agent'][sec] / 1e6:>8.2f}")
