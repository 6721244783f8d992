"""
Progress after synchrony returns
================================

First the combinatorial fact behind the liveness argument: however f
byzantine nodes sit on the creator circle, any n + 2 consecutive rounds
contain three honest creators in a row. Then the simulated check: after an
asynchronous stretch, a new block commits within that window.
"""

# %%
from itertools import combinations

from permitbft.liveness import has_honest_triple, lemma_b5_enumeration, liveness_check
from permitbft.scenario import scenario_from_dict
from permitbft.simnet import run

for n in (4, 7, 10, 13, 16):
    print(n, lemma_b5_enumeration(n))

# %%
# The window is tight: with creators 0 and 3 silent out of 7, the five
# rounds 1..5 never see three honest creators in a row.
print(has_honest_triple(7, (0, 3), 1, 5), has_honest_triple(7, (0, 3), 1, 6))

# %%
rows = []
for byz in combinations(range(7), 2):
    doc = {"n": 7, "f": 2, "seed": 1, "horizon": 80000,
           "phases": [{"start": 0, "end": 12000, "mode": "async"},
                      {"start": 12000, "mode": "sync"}],
           "byzantine": [{"node": b, "strategy": "silent"} for b in byz]}
    rep = liveness_check(run(scenario_from_dict(doc), keep_trace=False))
    rows.append((byz, rep.ok, rep.start_round, rep.rounds_to_commit))
for row in rows:
    print(row)
