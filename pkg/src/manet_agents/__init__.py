"""Mobile-agent congestion control for multi-rate ad-hoc networks, simulated."""

from importlib import resources
from pathlib import Path

from .engine import RunMode, Simulation, baseline_route, run
from .metrics import FlowMetrics, Metrics
from .net_model import (
    Link,
    LinkEvent,
    Topology,
    TrafficClass,
    bottleneck_rate,
    congestion_level,
    detect_mismatch,
    node_priority,
    queue_occupancy,
)
from .scenario import Flow, Params, Scenario, load_scenario, read_scenario, write_metrics

__version__ = "0.1.0"


def canonical_path() -> Path:
    """Location of the shipped nine-node canonical scenario."""
    return Path(str(resources.files(__package__) / "data" / "canonical.json"))


def canonical_scenario() -> Scenario:
    return read_scenario(canonical_path())


__all__ = [
    "Flow",
    "FlowMetrics",
    "Link",
    "LinkEvent",
    "Metrics",
    "Params",
    "RunMode",
    "Scenario",
    "Simulation",
    "Topology",
    "TrafficClass",
    "baseline_route",
    "bottleneck_rate",
    "canonical_path",
    "canonical_scenario",
    "congestion_level",
    "detect_mismatch",
    "load_scenario",
    "node_priority",
    "queue_occupancy",
    "read_scenario",
    "run",
    "write_metrics",
]
