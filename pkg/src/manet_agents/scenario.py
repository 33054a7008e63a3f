"""Scenario documents (JSON) and metrics output.

A scenario document is one JSON object::

    {
      "name": "two-node",
      "duration_s": 1.0,
      "nodes": ["A", "B"],
      "links": [{"a": "A", "b": "B", "rate_bps": 11000000, "prop_delay_ns": 0}],
      "flows": [{"src": "A", "dst": "B", "class": "best_effort", "rate_bps": 1000000}],
      "events": [{"at_s": 0.5, "kind": "down", "a": "A", "b": "B"}],
      "params": {"queue_capacity": 50}
    }

``events`` and ``params`` are optional; unknown keys anywhere are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .metrics import TABLE_COLUMNS, Metrics
from .net_model import Link, LinkEvent, NodeId, Topology, TopologyError, TrafficClass


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, msg: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(msg + where)
        self.line = line
        self.column = column


class ValidationError(ScenarioError):
    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


@dataclass(frozen=True)
class Params:
    low_threshold: float = 0.5
    high_threshold: float = 0.8
    queue_capacity: int = 50
    propagation_interval_ms: float = 100.0
    patrol_step_ms: float = 10.0
    probe_size_bits: int = 8000
    control_frame_bits: int = 1000
    report_frame_bits: int = 128
    reroute_streak: int = 2
    probe_timeout_factor: float = 10.0
    reroute_holddown_ms: float = 2000.0
    history_limit: int = 16
    ttl_hops: int = 64

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"params.{f.name}", f"expected a number, got {v!r}")
            if v <= 0:
                raise ValidationError(f"params.{f.name}", f"must be positive, got {v!r}")
            if f.type == "int" and not float(v).is_integer():
                raise ValidationError(f"params.{f.name}", f"must be an integer, got {v!r}")
        if not self.low_threshold < self.high_threshold <= 1.0:
            raise ValidationError("params.high_threshold", "thresholds need 0 < low < high <= 1")


@dataclass(frozen=True)
class Flow:
    src: NodeId
    dst: NodeId
    cls: TrafficClass
    rate: float
    packet_size: int = 8000
    start: float = 0.0
    stop: float = math.inf
    id: str = ""

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"flow {self.id}: rate must be positive")
        if not self.packet_size > 0:
            raise ValueError(f"flow {self.id}: packet size must be positive")
        if not self.start < self.stop:
            raise ValueError(f"flow {self.id}: start must precede stop")
        if self.src == self.dst:
            raise ValueError(f"flow {self.id}: source and destination coincide")


@dataclass
class Scenario:
    name: str
    duration: float
    topology: Topology
    flows: list[Flow] = field(default_factory=list)
    params: Params = field(default_factory=Params)

    def scaled(self, multiplier: float) -> Scenario:
        """Same scenario with every flow's offered rate multiplied."""
        return replace(self, flows=[replace(f, rate=f.rate * multiplier) for f in self.flows])

    def with_params(self, **changes) -> Scenario:
        params = replace(self.params, **changes)
        params.validate()
        return replace(self, params=params)

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return scenario_to_dict(self) == scenario_to_dict(other)


_TOP = {"name", "duration_s", "nodes", "links", "flows", "events", "params"}
_TOP_REQUIRED = {"name", "duration_s", "nodes", "links", "flows"}
_LINK = {"a", "b", "rate_bps", "prop_delay_ns"}
_FLOW = {"id", "src", "dst", "class", "rate_bps", "packet_size_bits", "start_s", "stop_s"}
_EVENT = {"at_s", "kind", "a", "b", "rate_bps", "prop_delay_ns"}


def _check_keys(obj, allowed: set, required: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ValidationError(where, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise ValidationError(f"{where}.{key}", "unknown field")
    for key in sorted(required):
        if key not in obj:
            raise ValidationError(f"{where}.{key}", "missing required field")


def _number(obj: dict, key: str, where: str, *, positive=False, nonneg=False, integer=False):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"{where}.{key}", f"expected a number, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(f"{where}.{key}", f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ValidationError(f"{where}.{key}", f"must be non-negative, got {v!r}")
    if integer and not float(v).is_integer():
        raise ValidationError(f"{where}.{key}", f"must be an integer, got {v!r}")
    return v


def _node(obj: dict, key: str, where: str, declared: set) -> NodeId:
    v = obj[key]
    if not isinstance(v, str):
        raise ValidationError(f"{where}.{key}", f"node ids are strings, got {v!r}")
    if v not in declared:
        raise ValidationError(f"{where}.{key}", f"undeclared node {v!r}")
    return v


def load_scenario(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    return scenario_from_dict(doc)


def read_scenario(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text())


def scenario_from_dict(doc) -> Scenario:
    _check_keys(doc, _TOP, _TOP_REQUIRED, "scenario")
    name = doc["name"]
    if not isinstance(name, str) or not name:
        raise ValidationError("name", "expected a non-empty string")
    duration = _number(doc, "duration_s", "scenario", positive=True)

    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not nodes:
        raise ValidationError("nodes", "expected a non-empty list of node ids")
    declared: set[str] = set()
    for i, n in enumerate(nodes):
        if not isinstance(n, str) or not n:
            raise ValidationError(f"nodes[{i}]", f"node ids are non-empty strings, got {n!r}")
        if n in declared:
            raise ValidationError(f"nodes[{i}]", f"duplicate node {n!r}")
        declared.add(n)

    if not isinstance(doc["links"], list):
        raise ValidationError("links", "expected a list")
    links = []
    seen_pairs: set[frozenset] = set()
    for i, raw in enumerate(doc["links"]):
        where = f"links[{i}]"
        _check_keys(raw, _LINK, {"a", "b", "rate_bps"}, where)
        a = _node(raw, "a", where, declared)
        b = _node(raw, "b", where, declared)
        if a == b:
            raise ValidationError(where, f"self-loop on {a!r}")
        if frozenset((a, b)) in seen_pairs:
            raise ValidationError(where, f"duplicate link {a}-{b}")
        seen_pairs.add(frozenset((a, b)))
        rate = _number(raw, "rate_bps", where, positive=True)
        prop = _number(raw, "prop_delay_ns", where, nonneg=True, integer=True) if "prop_delay_ns" in raw else 0
        links.append(Link(a, b, float(rate), int(prop) / 1e9))

    events = []
    raw_events = doc.get("events", [])
    if not isinstance(raw_events, list):
        raise ValidationError("events", "expected a list")
    for i, raw in enumerate(raw_events):
        where = f"events[{i}]"
        _check_keys(raw, _EVENT, {"at_s", "kind", "a", "b"}, where)
        at = _number(raw, "at_s", where, nonneg=True)
        kind = raw["kind"]
        if kind not in ("down", "up", "rate"):
            raise ValidationError(f"{where}.kind", f"expected down/up/rate, got {kind!r}")
        a = _node(raw, "a", where, declared)
        b = _node(raw, "b", where, declared)
        rate = float(_number(raw, "rate_bps", where, positive=True)) if "rate_bps" in raw else None
        prop = None
        if "prop_delay_ns" in raw:
            prop = int(_number(raw, "prop_delay_ns", where, nonneg=True, integer=True)) / 1e9
        if kind == "rate" and rate is None:
            raise ValidationError(f"{where}.rate_bps", "rate events need a rate")
        if frozenset((a, b)) not in seen_pairs and kind == "up" and rate is None:
            raise ValidationError(f"{where}.rate_bps", f"new link {a}-{b} needs a rate")
        try:
            events.append(LinkEvent(float(at), kind, a, b, rate, prop))
        except TopologyError as exc:
            raise ValidationError(where, str(exc)) from None

    if not isinstance(doc["flows"], list):
        raise ValidationError("flows", "expected a list")
    flows = []
    flow_ids: set[str] = set()
    for i, raw in enumerate(doc["flows"]):
        where = f"flows[{i}]"
        _check_keys(raw, _FLOW, {"src", "dst", "class", "rate_bps"}, where)
        fid = raw.get("id", f"f{i}")
        if not isinstance(fid, str) or not fid:
            raise ValidationError(f"{where}.id", "expected a non-empty string")
        if fid in flow_ids:
            raise ValidationError(f"{where}.id", f"duplicate flow id {fid!r}")
        flow_ids.add(fid)
        src = _node(raw, "src", where, declared)
        dst = _node(raw, "dst", where, declared)
        if src == dst:
            raise ValidationError(where, "source and destination coincide")
        if not isinstance(raw["class"], str):
            raise ValidationError(f"{where}.class", "expected a class name")
        try:
            cls = TrafficClass.parse(raw["class"])
        except ValueError as exc:
            raise ValidationError(f"{where}.class", str(exc)) from None
        rate = _number(raw, "rate_bps", where, positive=True)
        size = _number(raw, "packet_size_bits", where, positive=True, integer=True) if "packet_size_bits" in raw else 8000
        start = _number(raw, "start_s", where, nonneg=True) if "start_s" in raw else 0.0
        stop = _number(raw, "stop_s", where, positive=True) if "stop_s" in raw else duration
        if not start < stop:
            raise ValidationError(f"{where}.stop_s", "stop must come after start")
        flows.append(Flow(src, dst, cls, float(rate), int(size), float(start), float(stop), fid))

    raw_params = doc.get("params", {})
    allowed = {f.name for f in fields(Params)}
    _check_keys(raw_params, allowed, set(), "params")
    kw = {}
    for f in fields(Params):
        if f.name in raw_params:
            v = _number(raw_params, f.name, "params", positive=True, integer=f.type == "int")
            kw[f.name] = int(v) if f.type == "int" else float(v)
    params = Params(**kw)
    params.validate()

    return Scenario(name, float(duration), Topology(nodes, links, events), flows, params)


def _num_out(v: float):
    return int(v) if float(v).is_integer() else v


def scenario_to_dict(s: Scenario) -> dict:
    topo = s.topology
    out = {
        "name": s.name,
        "duration_s": _num_out(s.duration),
        "nodes": list(topo.nodes),
        "links": [
            {"a": l.a, "b": l.b, "rate_bps": _num_out(l.rate), "prop_delay_ns": round(l.propagation_delay * 1e9)}
            for l in topo.links.values()
        ],
        "flows": [],
        "events": [],
        "params": {f.name: getattr(s.params, f.name) for f in fields(Params)},
    }
    for f in s.flows:
        out["flows"].append(
            {
                "id": f.id,
                "src": f.src,
                "dst": f.dst,
                "class": f.cls.label,
                "rate_bps": _num_out(f.rate),
                "packet_size_bits": f.packet_size,
                "start_s": _num_out(f.start),
                "stop_s": _num_out(f.stop if math.isfinite(f.stop) else s.duration),
            }
        )
    for ev in topo.events:
        e = {"at_s": _num_out(ev.at), "kind": ev.kind, "a": ev.a, "b": ev.b}
        if ev.rate is not None:
            e["rate_bps"] = _num_out(ev.rate)
        if ev.propagation_delay is not None:
            e["prop_delay_ns"] = round(ev.propagation_delay * 1e9)
        out["events"].append(e)
    return out


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


# metrics output


def _cell(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def metrics_table(runs: Iterable[Metrics], extra: Sequence[tuple[str, object]] | None = None) -> str:
    """CSV text: one row per (run, flow) plus one totals row per run."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra_cols = [k for k, _ in extra] if extra else []
    w.writerow([*extra_cols, *TABLE_COLUMNS])
    for m in runs:
        for row in m.rows():
            w.writerow([*(_cell(v) for _, v in extra or ()), *(_cell(row[c]) for c in TABLE_COLUMNS)])
    return buf.getvalue()


def write_metrics(runs: Metrics | Sequence[Metrics], destination: str | Path) -> tuple[Path, Path]:
    """Write ``<destination>.csv`` (flat table) and ``<destination>.json`` (records)."""
    if isinstance(runs, Metrics):
        runs = [runs]
    dest = Path(destination)
    csv_path = dest.with_suffix(".csv")
    json_path = dest.with_suffix(".json")
    csv_path.write_text(metrics_table(runs))
    record = {"runs": [m.to_dict() for m in runs]}
    json_path.write_text(json.dumps(record, indent=2, allow_nan=False) + "\n")
    return csv_path, json_path


def read_metrics(path: str | Path) -> list[Metrics]:
    doc = json.loads(Path(path).with_suffix(".json").read_text())
    return [Metrics.from_dict(d) for d in doc["runs"]]


_INT_COLS = {"seed", "sent", "delivered", "dropped_queue", "dropped_noroute", "reroutes"}
_TEXT_COLS = {"run_id", "mode", "flow_id", "param"}


def read_table(path: str | Path) -> list[dict]:
    """Parse a metrics CSV back into typed rows (blank cells become NaN)."""
    rows = []
    with open(Path(path).with_suffix(".csv"), newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if k in _TEXT_COLS:
                    row[k] = v
                elif k in _INT_COLS:
                    row[k] = int(v)
                else:
                    row[k] = math.nan if v == "" else float(v)
            rows.append(row)
    return rows
