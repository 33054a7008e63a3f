"""
Loss against offered load
=========================

Scale the canonical flow from a quarter of its rate to twice its rate and
compare mean loss over a few seeds.  At 1 Mbps the original route copes
and both modes agree; above it only the rerouted traffic keeps up, until the
5.5 Mbps detour fills as well.
"""

from dataclasses import replace
from statistics import fmean

from manet_agents import canonical_scenario
from manet_agents.engine import run

base = canonical_scenario()
base = replace(base, duration=10.0, flows=[replace(f, stop=10.0) for f in base.flows])
SEEDS = range(3)

print(f"{'x load':>7}{'Mbps':>7}{'baseline loss':>15}{'agent loss':>12}")
for mult in (0.25, 0.5, 1.0, 1.5, 2.0):
    scenario = base.scaled(mult)
    loss = {
        mode: fmean(run(scenario, mode, s).totals.loss_rate for s in SEEDS)
        for mode in ("baseline", "agent")
    }
    print(f"{mult:>7.2f}{scenario.flows[0].rate / 1e6:>7.1f}{loss['baseline']:>15.3f}{loss['agent']:>12.3f}")
