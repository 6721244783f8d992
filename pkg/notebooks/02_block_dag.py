"""
Positions, respect and minimal merges
=====================================

Builds a small block graph by hand: two siblings on genesis, a chain on one
side, and a merge. Shows depth, commitment, the ``respects`` relation and
how a creator picks the smallest position covering several permits.
"""

# %%
from permitbft.core import creator_of, make_block, make_genesis, make_permit, quorum
from permitbft.crypto import Signer, SimScheme
from permitbft.dag import BlockDag, parse_export
from permitbft.messages import Proof

n, f = 4, 1
scheme = SimScheme(n)
signer = Signer(scheme, range(n))
genesis = make_genesis(())
dag = BlockDag(genesis, n, f, scheme)
g = genesis.block_id


def add(round_, *parents):
    pos = frozenset(parents)
    permits = frozenset(make_permit(signer, i, round_, pos) for i in range(quorum(f)))
    blk = make_block(signer, creator_of(round_, n), Proof(permits), ())
    print(f"round {round_}: {dag.insert_block(blk).status.name}")
    return blk.block_id


a = add(0, g)
b = add(1, g)  # sibling of a
a2 = add(2, a)
a3 = add(3, a2)
name = {g: "g", a: "a", b: "b", a2: "a2", a3: "a3"}

# %%
for bid in dag.ids():
    print(f"{name[bid]:>2} depth={dag.block_depth(bid)} committed={dag.is_committed(bid)}")

# %%
# ``b`` is off the path of {a3} and uncommitted at depth 1 <= 3 - 2: respected.
# From {a2} (depth 2) it is not.
for pos in ({a3}, {a2}, {a}):
    print("{" + ",".join(name[x] for x in pos) + "} respects",
          sorted(name[x] for x in dag.ids_of(dag.respected_mask(pos))))

# %%
# A creator holding permits for {a2} and {b} merges them. {a3} alone would
# not be offered here because it is not in the union of the permits.
print("merge {a2},{b} ->", sorted(name[x] for x in dag.minimal_position([{a2}, {b}])))
print("merge {a3},{b} ->", sorted(name[x] for x in dag.minimal_position([{a3}, {b}])))

# %%
print(dag.export())
print(parse_export(dag.export())[1])
