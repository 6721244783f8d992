"""Test helpers: a hand-driven block builder, a random dag generator and
brute-force reference implementations that share no code with the library.

The reference functions only read ``dag.blocks`` (id -> Block) and each
block's ``position``; they recompute paths, depths and the respects
relation from scratch on every call.
"""

from __future__ import annotations

from collections import deque
from itertools import combinations

import numpy as np

from permitbft.core import creator_of, make_block, make_genesis, make_permit, max_faulty, quorum
from permitbft.crypto import Signer, SimScheme
from permitbft.dag import BlockDag, InsertStatus
from permitbft.messages import OutputRef, Proof, Transaction, TxOutput


def mint(owner: str, amount: int, nonce: int = 0) -> Transaction:
    return Transaction(frozenset(), (TxOutput(owner, amount),), nonce)


def spend(refs, *outputs, nonce: int = 0) -> Transaction:
    return Transaction(frozenset(refs), tuple(TxOutput(o, a) for o, a in outputs), nonce)


class Builder:
    """Builds validly signed blocks over an explicit parent set."""

    def __init__(self, n: int = 4, mints=()):
        self.n = n
        self.f = max_faulty(n)
        self.scheme = SimScheme(n)
        self.signer = Signer(self.scheme, range(n))
        self.genesis = make_genesis(mints)
        self.g = self.genesis.block_id
        self.dag = BlockDag(self.genesis, n, self.f, self.scheme)
        self._next_round = 0

    def make(self, *parents, txs=(), round_=None, issuers=None):
        pos = frozenset(parents) if parents else frozenset({self.g})
        if round_ is None:
            round_ = self._next_round
        self._next_round = max(self._next_round, round_ + 1)
        issuers = range(quorum(self.f)) if issuers is None else issuers
        permits = frozenset(make_permit(self.signer, i, round_, pos) for i in issuers)
        return make_block(self.signer, creator_of(round_, self.n), Proof(permits), tuple(txs))

    def add(self, *parents, txs=(), round_=None):
        blk = self.make(*parents, txs=txs, round_=round_)
        res = self.dag.insert_block(blk)
        assert res.status is InsertStatus.INSERTED, res
        return blk.block_id

    def permit(self, issuer, round_, *pos):
        return make_permit(self.signer, issuer, round_, frozenset(pos))


# ----------------------------------------------------------------------
# random dags


def random_dag(seed: int, max_blocks: int = 8, n: int = 4):
    """A dag of at most ``max_blocks`` blocks (genesis included) carrying
    random, partly conflicting transfers of four genesis mints."""
    rng = np.random.default_rng([0xDA6, seed])
    mints = [mint(f"m{i}", 10, nonce=i) for i in range(4)]
    b = Builder(n, mints)
    pool = []
    for i, m in enumerate(mints):
        for j in range(3):  # up to three rival spends per mint
            pool.append(spend([m.output_ref(0)], (f"p{i}-{j}", 10), nonce=j))
    ids = [b.g]
    total = int(rng.integers(2, max_blocks + 1))
    while len(ids) < total:
        k = int(rng.integers(1, min(3, len(ids)) + 1))
        # bias parents towards recent blocks so the dag gets some depth
        weights = np.arange(1, len(ids) + 1, dtype=float) ** 2
        parents = rng.choice(len(ids), size=k, replace=False, p=weights / weights.sum())
        ntx = int(rng.integers(0, 3))
        txs = [pool[int(x)] for x in rng.choice(len(pool), size=ntx, replace=False)]
        blk = b.make(*(ids[int(p)] for p in parents), txs=txs, round_=int(rng.integers(0, 12)))
        if b.dag.insert_block(blk).status is InsertStatus.INSERTED:
            ids.append(blk.block_id)
    return b


# ----------------------------------------------------------------------
# reference implementations


def ref_parents(dag) -> dict:
    return {bid: set(blk.position) for bid, blk in dag.blocks.items()}


def ref_depths(dag) -> dict:
    """BFS shortest path length from genesis along parent -> child edges."""
    children = {bid: set() for bid in dag.blocks}
    for bid, ps in ref_parents(dag).items():
        for p in ps:
            children[p].add(bid)
    g = next(bid for bid, blk in dag.blocks.items() if blk.is_genesis)
    dist = {g: 0}
    queue = deque([g])
    while queue:
        u = queue.popleft()
        for v in children[u]:
            if v not in dist:
                # v becomes reachable only when some parent is; shortest path wins
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def ref_on_path(dag, pos) -> set:
    """Blocks lying on some genesis -> member path: members and their ancestors."""
    parents = ref_parents(dag)
    seen, stack = set(), list(pos)
    while stack:
        u = stack.pop()
        if u not in seen:
            seen.add(u)
            stack.extend(parents[u])
    return seen


def ref_committed_blocks(dag) -> set:
    return {p for ps in ref_parents(dag).values() for p in ps}


def ref_respects(dag, pos, bid, depths=None, committed=None) -> bool:
    depths = depths or ref_depths(dag)
    committed = ref_committed_blocks(dag) if committed is None else committed
    if bid in ref_on_path(dag, pos):
        return True
    pos_depth = min(depths[m] for m in pos)
    return bid not in committed and depths[bid] <= pos_depth - 2


def ref_respected_set(dag, pos) -> set:
    depths = ref_depths(dag)
    committed = ref_committed_blocks(dag)
    return {b for b in dag.blocks if ref_respects(dag, pos, b, depths, committed)}


def ref_minimal_position(dag, positions):
    """Smallest subsets of the inputs' union respecting every input block.

    Exhaustive over subsets in increasing size. Returns every smallest
    solution so callers can check uniqueness.
    """
    targets = set().union(*positions)
    ids = sorted(targets)
    for size in range(1, len(ids) + 1):
        found = [frozenset(c) for c in combinations(ids, size)
                 if targets <= ref_respected_set(dag, c)]
        if found:
            return found
    raise AssertionError("no respecting subset")


def ref_committed_transactions(dag) -> set:
    """Enumerate (block, child, respected committed block) triples directly."""
    parents = ref_parents(dag)
    committed_blocks = ref_committed_blocks(dag)
    out = set()
    for b in committed_blocks:
        children = [c for c, ps in parents.items() if b in ps]
        for tx in dag.blocks[b].transactions:
            for c in children:
                seen = [x for x in ref_respected_set(dag, dag.blocks[c].position)
                        if x in committed_blocks]
                rivals = [t for x in seen for t in dag.blocks[x].transactions
                          if t.tx_id != tx.tx_id and t.inputs & tx.inputs]
                if not rivals:
                    out.add(tx.tx_id)
                    break
    return out


def ref_frozen_refs(dag, committed) -> set:
    committed_blocks = ref_committed_blocks(dag)
    users: dict = {}
    for b in committed_blocks:
        for tx in dag.blocks[b].transactions:
            for r in tx.inputs:
                users.setdefault(r, set()).add(tx.tx_id)
    return {r for r, ts in users.items() if len(ts) >= 2 and not ts & committed}


def ref_linearize(export_records, committed, txs_by_block):
    """Finalization rule re-implemented over ``BlockDag.export`` records."""
    max_depth = max(r["depth"] for r in export_records)
    final_blocks = [r for r in export_records
                    if r["committed"] and r["depth"] + 2 <= max_depth]
    key = lambda r: (r["depth"], -1 if r["round"] is None else r["round"],
                     -1 if r["creator"] is None else r["creator"], r["id"])
    # Kahn's algorithm: a block is ready once its finalized parents are
    # placed (a multi-parent block can be shallower than one of its parents)
    ids = {r["id"] for r in final_blocks}
    by_id = {r["id"]: r for r in export_records}

    def final_ancestors(bid, acc):
        for p in by_id[bid]["parents"]:
            if p not in acc:
                acc.add(p)
                final_ancestors(p, acc)
        return acc & ids

    need = {r["id"]: final_ancestors(r["id"], set()) for r in final_blocks}
    finalized, seen, placed = [], set(), set()
    while len(placed) < len(ids):
        ready = sorted((by_id[b] for b in ids - placed if need[b] <= placed), key=key)
        r = ready[0]
        placed.add(r["id"])
        for t in txs_by_block[r["id"]]:
            if t in committed and t not in seen:
                seen.add(t)
                finalized.append(t)
    head = {t for ts in txs_by_block.values() for t in ts if t in committed and t not in seen}
    return finalized, head


def ref_proof_ok(permits, n, f, valid) -> bool:
    """Brute-force proof acceptance: distinct issuers, quorum, uniform
    (round, position), every signature valid."""
    issuers = [p.issuer for p in permits]
    return (len(set(issuers)) == len(issuers) >= 2 * f + 1
            and len({p.round for p in permits}) == 1
            and len({p.position for p in permits}) == 1
            and all(valid(p) for p in permits))


__all__ = [
    "Builder", "OutputRef", "mint", "spend", "random_dag",
    "ref_depths", "ref_on_path", "ref_respects", "ref_respected_set", "ref_minimal_position",
    "ref_committed_transactions", "ref_frozen_refs", "ref_linearize", "ref_proof_ok",
]
