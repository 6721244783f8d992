"""
Equivocation and frozen funds
=============================

A byzantine creator sends two variants of its round-0 block, each spending
the same output to a different payee. Honest nodes split, the next creator
merges both siblings, and neither spend ever commits: the contested output
stays frozen while every other coin keeps moving.
"""

# %%
from pathlib import Path

from permitbft.ledger import execute, ledger_dump, ledger_view, total_value
from permitbft.scenario import load_scenario
from permitbft.simnet import run

ROOT = Path(__file__).resolve().parents[1]
sc = load_scenario(ROOT / "scenarios" / "double_spend.toml")
res = run(sc)
dag = res.global_dag
print("violation:", res.violation)

# %%
variants = [blk for blk in dag.blocks.values()
            if not blk.is_genesis and blk.round == 0 and blk.creator == 0]
for blk in variants:
    payees = [o.owner for tx in blk.transactions for o in tx.outputs]
    print(blk.block_id.hex()[:8], "pays", payees)
merge = [blk for blk in dag.blocks.values()
         if {v.block_id for v in variants} <= blk.position]
print("merged by round", merge[0].round, "creator", merge[0].creator)

# %%
view = ledger_view(dag)
print(ledger_dump(view))

# %%
state = execute(view)
minted = sum(o.amount for tx in sc.mints for o in tx.outputs)
print("spendable", total_value(state.spendable), "frozen", total_value(state.frozen),
      "minted", minted)
