"""Command-line entry point: run, compare, sweep, validate."""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from statistics import fmean

from .engine import RunMode, run
from .metrics import TABLE_COLUMNS, Metrics
from .scenario import ScenarioError, Scenario, metrics_table, read_scenario, write_metrics

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2

SWEEPABLE = {
    "offered_load": None,
    "probe_size": "probe_size_bits",
    "propagation_interval": "propagation_interval_ms",
}


class UsageError(Exception):
    pass


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0..9"`` (inclusive) or ``"1,4,7"``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise UsageError(f"empty seed range {text!r}")
            return list(range(lo, hi + 1))
        seeds = [int(s) for s in text.split(",") if s.strip()]
        if not seeds:
            raise UsageError("--seeds needs at least one seed")
        return seeds
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None


def parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"bad value list {text!r}") from None
    if not values:
        raise UsageError("--values needs at least one value")
    return values


def apply_param(scenario: Scenario, param: str, value: float) -> Scenario:
    if param not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEPABLE)}")
    if not value > 0:
        raise UsageError(f"{param} values must be positive, got {value}")
    if param == "offered_load":
        return scenario.scaled(value)
    field = SWEEPABLE[param]
    if field.endswith("_bits"):
        if not float(value).is_integer():
            raise UsageError(f"{param} must be a whole number of bits")
        value = int(value)
    return scenario.with_params(**{field: value})


def _one(job):
    scenario, mode, seed = job
    return run(scenario, mode, seed)


def run_many(jobs: list, n_workers: int = 1) -> list[Metrics]:
    if n_workers <= 1 or len(jobs) <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_one, jobs))


def summarize(runs: list[Metrics]) -> list[dict]:
    """Mean loss, delay and goodput per mode, plus agent-minus-baseline deltas."""
    rows = []
    by_mode = {}
    for mode in (RunMode.AGENT.value, RunMode.BASELINE.value):
        sel = [m.totals for m in runs if m.mode == mode]
        if not sel:
            continue
        delays = [t.mean_delay_ms for t in sel if not math.isnan(t.mean_delay_ms)]
        by_mode[mode] = {
            "mode": mode,
            "runs": len(sel),
            "mean_loss_rate": fmean(t.loss_rate for t in sel),
            "mean_delay_ms": fmean(delays) if delays else math.nan,
            "mean_goodput_bps": fmean(t.goodput_bps for t in sel),
        }
        rows.append(by_mode[mode])
    if len(by_mode) == 2:
        a, b = by_mode["agent"], by_mode["baseline"]
        rows.append(
            {
                "mode": "agent-baseline",
                "runs": a["runs"],
                "mean_loss_rate": a["mean_loss_rate"] - b["mean_loss_rate"],
                "mean_delay_ms": a["mean_delay_ms"] - b["mean_delay_ms"],
                "mean_goodput_bps": a["mean_goodput_bps"] - b["mean_goodput_bps"],
            }
        )
    return rows


def _summary_text(rows: list[dict], prefix: list[str] | None = None, header: bool = True) -> str:
    cols = ["mode", "runs", "mean_loss_rate", "mean_delay_ms", "mean_goodput_bps"]
    lines = []
    if header:
        lines.append(",".join([*(prefix and ["param", "value"] or []), *cols]))
    for r in rows:
        cells = [repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols]
        lines.append(",".join([*(prefix or []), *cells]))
    return "\n".join(lines) + "\n"


def _summary_path(out: Path) -> Path:
    return out.with_name(out.with_suffix("").name + "_summary.csv")


def _load(path: str) -> Scenario:
    try:
        return read_scenario(path)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {path}: {exc.strerror or exc}") from None


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    metrics = run(scenario, args.mode, args.seed)
    if args.out:
        write_metrics(metrics, args.out)
    table = metrics_table([metrics]).splitlines()
    print(table[0])
    print(table[-1])
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _load(args.scenario)
    seeds = parse_seeds(args.seeds)
    jobs = [(scenario, mode, seed) for seed in seeds for mode in (RunMode.AGENT.value, RunMode.BASELINE.value)]
    runs = run_many(jobs, args.jobs)
    summary = summarize(runs)
    text = _summary_text(summary)
    if args.out:
        write_metrics(runs, args.out)
        _summary_path(Path(args.out)).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    values = parse_values(args.values)
    seeds = parse_seeds(args.seeds)
    variants = [apply_param(scenario, args.param, v) for v in values]
    jobs = [(sc, mode, seed) for sc in variants for seed in seeds for mode in (RunMode.AGENT.value, RunMode.BASELINE.value)]
    runs = run_many(jobs, args.jobs)
    per_value = len(seeds) * 2
    blocks = [(v, runs[i * per_value : (i + 1) * per_value]) for i, v in enumerate(values)]

    lines = [",".join(["param", "value", *TABLE_COLUMNS])]
    summary = []
    for k, (v, block) in enumerate(blocks):
        body = metrics_table(block).splitlines()[1:]
        lines.extend(f"{args.param},{v!r},{row}" for row in body)
        summary.append(_summary_text(summarize(block), [args.param, repr(v)], header=k == 0))
    text = "".join(summary)
    if args.out:
        out = Path(args.out)
        out.with_suffix(".csv").write_text("\n".join(lines) + "\n")
        record = {"param": args.param, "blocks": [{"value": v, "runs": [m.to_dict() for m in b]} for v, b in blocks]}
        out.with_suffix(".json").write_text(json.dumps(record, indent=2, allow_nan=False) + "\n")
        _summary_path(out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    topo = scenario.topology
    print(f"{scenario.name}: {len(topo.nodes)} nodes, {len(topo.links)} links, {len(scenario.flows)} flows, {scenario.duration:g} s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manet-agents", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate one (scenario, mode, seed)")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=[m.value for m in RunMode], default=RunMode.AGENT.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="metrics destination; writes .csv and .json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="agent vs baseline over a seed range")
    p.add_argument("scenario")
    p.add_argument("--seeds", default="0", help="N, N..M (inclusive) or a comma list")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="compare blocks across values of one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", required=True, help=", ".join(SWEEPABLE))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", default="0")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="load and check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # runtime fault, including output-destination errors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
