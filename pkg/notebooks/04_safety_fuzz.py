"""
Seeded adversarial runs under the safety oracle
===============================================

Every run draws a random mix of byzantine strategies, synchrony phases and
partitions. The oracle watches every honest permit and every block; any
violation aborts the run with a witness.
"""

# %%
from collections import Counter

import numpy as np

from permitbft.fuzz import fuzz, random_document, random_scenario
from permitbft.simnet import run

outcomes = fuzz(range(200))
print("violations:", [o for o in outcomes if o.violation])
print("strategies:", Counter(s for o in outcomes for s in o.strategies))

# %%
# Honest nodes sometimes permit a position that misses a promised block
# (they still hold the sibling that lost). The oracle counts these and only
# fails when more than f honest nodes do it in one round.
unsafe = np.array([o.unsafe_honest_permits for o in outcomes])
print("runs with unsafe honest permits:", int((unsafe > 0).sum()), "max", unsafe.max())

# %%
doc = random_document(3)
print({k: doc[k] for k in ("n", "f", "byzantine")})
res = run(random_scenario(3))
o = res.oracle
print("promised positions:", len(o.promised_positions), "checks:", o.checks,
      "unsafe:", o.unsafe_honest_permits, "shallow:", o.shallow_honest_permits)
