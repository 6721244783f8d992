"""Per-run summary records and their JSON / CSV serialisation."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np


def classify_rounds(metrics) -> tuple[set, set]:
    """(normal, failure) rounds: a failure round saw at least one timeout message."""
    failure = {r for r, kinds in metrics.msg_counts.items() if kinds.get("timeout")}
    produced = {rnd for _, rnd, _, _ in metrics.blocks}
    normal = {r for r in metrics.msg_counts if r in produced and r not in failure}
    return normal, failure


def run_record(result, liveness=None) -> dict:
    m = result.metrics
    sc = result.scenario
    delta = sc.timers.delta
    lat = np.array(sorted(m.latencies().values()), dtype=float) / delta
    totals = m.round_totals()
    normal, failure = classify_rounds(m)
    oracle = result.oracle
    rec = {
        "name": sc.name,
        "seed": sc.seed,
        "n": sc.n,
        "f": sc.f,
        "trace_digest": result.trace_digest,
        "end_time": m.end_time,
        "blocks": len(result.global_dag) - 1,
        "proposals": len(m.proposals),
        "txs_received": len(m.tx_received),
        "txs_committed": len(m.tx_committed),
        "latency_count": int(lat.size),
        "latency_min": float(lat.min()) if lat.size else None,
        "latency_mean": float(lat.mean()) if lat.size else None,
        "latency_max": float(lat.max()) if lat.size else None,
        "normal_rounds": len(normal),
        "normal_msgs_max": max((totals[r] for r in normal), default=0),
        "failure_rounds": len(failure),
        "failure_msgs_max": max((totals[r] for r in failure), default=0),
        "failure_msgs_min": min((totals[r] for r in failure), default=0),
        "violations": len(m.violations),
        "violation": None if result.violation is None else str(result.violation),
        "unsafe_honest_permits": oracle.unsafe_honest_permits if oracle else None,
    }
    if liveness is not None:
        rec["liveness_ok"] = liveness.ok
        rec["rounds_to_commit"] = liveness.rounds_to_commit
    return rec


def dumps(records: list[dict], fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(records, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        keys: list = []
        for r in records:
            keys += [k for k in r if k not in keys]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: "" if r.get(k) is None else r.get(k) for k in keys})
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def write_report(records: list[dict], path: str | Path, fmt: str = "json") -> None:
    Path(path).write_text(dumps(records, fmt))


def plot_data(records: list[dict]) -> str:
    """Whitespace-separated ``seed latency_mean latency_max`` rows (Δ units)."""
    lines = ["# seed latency_mean latency_max"]
    for r in sorted(records, key=lambda r: r["seed"]):
        if r.get("latency_count"):
            lines.append(f"{r['seed']} {r['latency_mean']:.4f} {r['latency_max']:.4f}")
    return "\n".join(lines) + "\n"
