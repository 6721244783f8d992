"""Random adversarial scenarios for safety fuzzing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import scenario_from_dict
from .simnet import run

STRATEGIES = ("equivocate", "withhold", "stale_permit", "spam_timeouts", "crash_at", "silent",
              "custom")


def random_document(seed: int, sizes=(4, 7)) -> dict:
    """A scenario document mixing byzantine strategies, async phases and partitions."""
    rng = np.random.default_rng([0x5EED, seed])
    n = int(rng.choice(sizes))
    f = (n - 1) // 3
    delta = 1000
    horizon = int(rng.integers(25, 41)) * delta
    honest_pool = list(range(n))
    byz_nodes = sorted(int(x) for x in rng.choice(n, size=int(rng.integers(1, f + 1)), replace=False))
    honest = [i for i in honest_pool if i not in byz_nodes]

    byzantine = []
    for node in byz_nodes:
        kind = str(rng.choice(STRATEGIES, p=[0.3, 0.15, 0.15, 0.15, 0.1, 0.05, 0.1]))
        entry: dict = {"node": node, "strategy": kind}
        if kind == "equivocate":
            entry["k"] = int(rng.integers(2, 4))
            entry["abstain"] = bool(rng.random() < 0.7)
        elif kind == "withhold":
            size = int(rng.integers(1, len(honest) + 1))
            entry["targets"] = sorted(int(x) for x in rng.choice(honest, size=size, replace=False))
        elif kind == "stale_permit":
            entry["lag"] = int(rng.integers(1, 4))
        elif kind == "spam_timeouts":
            entry["ahead"] = int(rng.integers(0, 4))
        elif kind == "crash_at":
            entry["round"] = int(rng.integers(0, 10))
        elif kind == "custom":
            entry["steps"] = [
                {"time": int(rng.integers(0, horizon)), "kind": str(rng.choice(["timeout", "permit"])),
                 "round": int(rng.integers(0, 12)), "to": int(rng.integers(-1, n)),
                 "position": str(rng.choice(["current", "genesis"]))}
                for _ in range(int(rng.integers(1, 6)))
            ]
        byzantine.append(entry)

    phases = [{"start": 0, "mode": "sync"}]
    if rng.random() < 0.5:
        a = int(rng.integers(2, 12)) * delta
        b = a + int(rng.integers(2, 10)) * delta
        phases = [{"start": 0, "end": a, "mode": "sync"},
                  {"start": a, "end": b, "mode": "async"},
                  {"start": b, "mode": "sync"}]
    partitions = []
    if rng.random() < 0.4:
        perm = [int(x) for x in rng.permutation(n)]
        cut = int(rng.integers(1, n))
        s = int(rng.integers(0, 15)) * delta
        partitions.append({"start": s, "end": s + int(rng.integers(2, 12)) * delta,
                           "groups": [sorted(perm[:cut]), sorted(perm[cut:])]})

    mints = [{"owner": "mallory", "amount": 50} for _ in range(4)]
    mints += [{"owner": f"client{i}", "amount": 10 * (i + 1)} for i in range(4)]
    txs = []
    for i in range(4):
        t = int(rng.integers(0, horizon // 2))
        target = int(rng.choice(honest_pool))
        txs.append({"time": t, "target": target, "inputs": [{"mint": 4 + i}],
                    "outputs": [{"owner": f"payee{i}", "amount": 10 * (i + 1)}]})
        if rng.random() < 0.5:
            # a client double-spend sent to another creator
            other = int(rng.choice(honest_pool))
            txs.append({"time": t + int(rng.integers(0, 3 * delta)), "target": other,
                        "inputs": [{"mint": 4 + i}],
                        "outputs": [{"owner": f"thief{i}", "amount": 10 * (i + 1)}]})
    txs.sort(key=lambda x: x["time"])
    return {
        "name": f"fuzz-{seed}", "n": n, "f": f, "seed": seed, "horizon": horizon,
        "phases": phases, "partitions": partitions, "byzantine": byzantine,
        "mints": mints, "txs": txs,
    }


def random_scenario(seed: int, sizes=(4, 7)):
    return scenario_from_dict(random_document(seed, sizes))


@dataclass(frozen=True)
class FuzzOutcome:
    seed: int
    n: int
    strategies: tuple
    blocks: int
    committed_txs: int
    unsafe_honest_permits: int
    violation: str | None
    trace_digest: str


def fuzz_one(seed: int, sizes=(4, 7)) -> FuzzOutcome:
    doc = random_document(seed, sizes)
    res = run(scenario_from_dict(doc), keep_trace=False)
    oracle = res.oracle
    return FuzzOutcome(
        seed=seed, n=doc["n"], strategies=tuple(b["strategy"] for b in doc["byzantine"]),
        blocks=len(res.global_dag) - 1,
        committed_txs=len(oracle.committed_txs) if oracle else 0,
        unsafe_honest_permits=oracle.unsafe_honest_permits if oracle else 0,
        violation=None if res.violation is None else str(res.violation),
        trace_digest=res.trace_digest,
    )


def fuzz(seeds, sizes=(4, 7), workers: int = 1) -> list[FuzzOutcome]:
    """Run every seed; results come back in seed order whatever ``workers`` is."""
    seeds = list(seeds)
    if workers <= 1:
        return [fuzz_one(s, sizes) for s in seeds]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fuzz_one, seeds, [sizes] * len(seeds), chunksize=16))
