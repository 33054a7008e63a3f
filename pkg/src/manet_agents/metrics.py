"""Run metrics records and the nearest-rank percentile they use."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

TABLE_COLUMNS = (
    "run_id",
    "mode",
    "seed",
    "flow_id",
    "sent",
    "delivered",
    "dropped_queue",
    "dropped_noroute",
    "loss_rate",
    "mean_delay_ms",
    "p95_delay_ms",
    "goodput_bps",
    "agent_overhead_ratio",
    "reroutes",
)

TOTAL_ID = "total"


def nearest_rank(sorted_values: Sequence[float], pct: float) -> float:
    if not sorted_values:
        return math.nan
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def loss_ratio(sent: int, delivered: int, dropped: int, in_flight: int) -> float:
    """Dropped share of the packets whose fate is known; 1.0 when nothing arrived."""
    if sent == 0:
        return 0.0
    if delivered == 0:
        return 1.0
    return dropped / (sent - in_flight)


@dataclass
class FlowMetrics:
    flow_id: str
    sent: int = 0
    delivered: int = 0
    dropped_queue: int = 0
    dropped_noroute: int = 0
    in_flight: int = 0
    loss_rate: float = 0.0
    mean_delay_ms: float = math.nan
    p95_delay_ms: float = math.nan
    goodput_bps: float = 0.0
    reroutes: int = 0

    @property
    def dropped(self) -> int:
        return self.dropped_queue + self.dropped_noroute

    def to_dict(self) -> dict:
        return {f.name: _json_num(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> FlowMetrics:
        kw = {}
        for f in fields(cls):
            v = d[f.name]
            kw[f.name] = math.nan if v is None else v
        return cls(**kw)


@dataclass
class Metrics:
    run_id: str
    mode: str
    seed: int
    duration_s: float
    flows: list[FlowMetrics] = field(default_factory=list)
    totals: FlowMetrics = field(default_factory=lambda: FlowMetrics(TOTAL_ID))
    agent_overhead_ratio: float = 0.0
    control_bits: int = 0
    data_bits: int = 0
    reroutes: int = 0

    def flow(self, flow_id: str) -> FlowMetrics:
        for fm in self.flows:
            if fm.flow_id == flow_id:
                return fm
        raise KeyError(flow_id)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "agent_overhead_ratio": self.agent_overhead_ratio,
            "control_bits": self.control_bits,
            "data_bits": self.data_bits,
            "reroutes": self.reroutes,
            "flows": [f.to_dict() for f in self.flows],
            "totals": self.totals.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Metrics:
        return cls(
            run_id=d["run_id"],
            mode=d["mode"],
            seed=d["seed"],
            duration_s=d["duration_s"],
            flows=[FlowMetrics.from_dict(f) for f in d["flows"]],
            totals=FlowMetrics.from_dict(d["totals"]),
            agent_overhead_ratio=d["agent_overhead_ratio"],
            control_bits=d["control_bits"],
            data_bits=d["data_bits"],
            reroutes=d["reroutes"],
        )

    def rows(self) -> list[dict]:
        """Table rows: one per flow, then the totals row."""
        out = []
        for fm in [*self.flows, self.totals]:
            row = {
                "run_id": self.run_id,
                "mode": self.mode,
                "seed": self.seed,
                "agent_overhead_ratio": self.agent_overhead_ratio,
            }
            for col in TABLE_COLUMNS:
                if col not in row:
                    row[col] = getattr(fm, col)
            out.append({c: row[c] for c in TABLE_COLUMNS})
        return out


def _json_num(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def same_values(a, b) -> bool:
    """Equality that treats NaN as equal to NaN."""
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b
