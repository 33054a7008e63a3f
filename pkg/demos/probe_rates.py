"""
Measuring path rates with probes
================================

A probe is an 8000-bit frame sent hop by hop through the real queues.  On an
idle network each hop costs ``size / rate`` (store and forward), so the rate a
probe reports is ``size / sum(size / rate_i)``.  This script probes the two
detours around the slow F-H link of the canonical topology and checks them
against that sum.
"""

from manet_agents import canonical_scenario
from manet_agents.engine import Simulation
from manet_agents.net_model import bottleneck_rate

scenario = canonical_scenario()
topo = scenario.topology

###############################################################################
# The two detours
# ---------------
# Both leave the original route at F. One goes through E (2 Mbps links), the
# other through G (5.5 Mbps links).

detours = {
    "via E": ["S", "B", "D", "F", "E", "H"],
    "via G": ["S", "B", "D", "F", "G", "H"],
}

###############################################################################
# Probe each one on an otherwise idle network
# -------------------------------------------
# Baseline mode is used only because it has no patrol traffic to share the
# links with.

size = scenario.params.probe_size_bits
print(f"{'path':<14}{'hand sum':>12}{'probe':>12}{'bottleneck':>12}")
for label, path in detours.items():
    hand = size / sum(size / topo.rate(u, v) for u, v in zip(path, path[1:]))
    result = Simulation(scenario, "baseline").probe(path)
    print(f"{label:<14}{hand / 1e6:>10.3f} M{result.data_rate / 1e6:>10.3f} M{bottleneck_rate(path, topo) / 1e6:>10.3f} M")

###############################################################################
# The probe never beats the bottleneck: every extra hop adds its own
# serialisation time, so only a single-hop path reaches the link rate.

one_hop = Simulation(scenario, "baseline").probe(["S", "B"])
print(f"\nsingle 11 Mbps hop: {one_hop.channel_delay * 1e6:.1f} us, {one_hop.data_rate / 1e6:.3f} Mbps")
