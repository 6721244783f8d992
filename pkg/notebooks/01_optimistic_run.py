"""
An all-good-case run
====================

Four nodes, one of them silent but not a creator of the interesting rounds,
and every message takes exactly one Δ. A transfer injected at the creator
when its proof completes is committed two message delays later.
"""

# %%
from pathlib import Path

import numpy as np

from permitbft.report import classify_rounds, run_record
from permitbft.scenario import load_scenario
from permitbft.simnet import run

ROOT = Path(__file__).resolve().parents[1]
sc = load_scenario(ROOT / "scenarios" / "optimistic.toml")
res = run(sc)
print(f"n={sc.n} f={sc.f} byzantine={sc.byzantine} horizon={sc.horizon}")

# %%
# Latency is measured from the first honest receipt to the first commit.
lat = np.array(list(res.metrics.latencies().values())) / sc.timers.delta
print("latency in Δ units:", lat)

# %%
# Blocks per round, and how every honest node entered each round.
for t, rnd, creator, bid in res.metrics.blocks:
    print(f"t={t:>6} round={rnd} creator={creator} block={bid.hex()[:8]}")
for node in res.honest:
    print(node, [(r, via) for r, _, via in res.metrics.round_entries[node]][:6])

# %%
# Messages per round: block-producing rounds stay linear in n, rounds with a
# silent creator fall back to all-to-all timeouts.
normal, failure = classify_rounds(res.metrics)
totals = res.metrics.round_totals()
print("normal rounds:", {r: totals[r] for r in sorted(normal)})
print("failure rounds:", {r: totals[r] for r in sorted(failure)})

# %%
rec = run_record(res)
print({k: rec[k] for k in ("blocks", "txs_committed", "latency_max", "normal_msgs_max")})
print("first trace lines:")
print("\n".join(res.trace.lines[:8]))
