"""Global safety oracle over the omniscient block graph.

The oracle sees every honest permit at the moment it is issued and every
block at the moment it is created. After each simulator event it checks:

(i)   every committed block is promised;
(ii)  no two conflicting blocks are promised independently;
(iii) no two conflicting blocks are committed independently;
(iv)  in every round at most ``f`` honest nodes issue an unsafe permit;
(v)   no two conflicting transactions are committed.

A position is promised once enough honest nodes endorse it in one round
that the byzantine nodes could complete a quorum: ``2f + 1 - b`` honest
permits for ``b`` byzantine nodes, which is ``f + 1`` when ``b = f``. With
fewer byzantine nodes the ``f + 1`` threshold is too low: six honest nodes
out of seven can split 3/3 over two equivocated siblings.

A permit is *unsafe* if its position does not respect every block promised
at issuance time. The stronger claim that no honest permit is ever unsafe
does not hold (an honest node may still hold a block that lost the race to
a quorum elsewhere); its count is kept in ``unsafe_honest_permits``.
"""

from __future__ import annotations

from .core import quorum
from .ledger import committed_by_child
from .messages import Block, Permit, short
from .simnet import OracleViolation


def iter_bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


class OracleState:
    def __init__(self, sim):
        self.n, self.f = sim.n, sim.f
        self.dag = sim.global_dag
        self.honest_ids = frozenset(sim.honest_ids)
        self.threshold = quorum(self.f) - (self.n - len(self.honest_ids))
        self.honest_permits: dict = {}  # round -> {node: position}
        self.promised_positions: list = []
        self.promised_mask = 0
        self.committed_txs: set = set()
        self.unsafe_honest_permits = 0
        self.unsafe_issuers: dict = {}  # round -> {node}
        self.shallow_honest_permits = 0
        self.max_block_depth = 0
        self.checks = 0
        self._dirty = False

    @property
    def promised(self) -> frozenset:
        return self.dag.ids_of(self.promised_mask)

    # ------------------------------------------------------------------
    # observations

    def on_honest_permit(self, issuer: int, permit: Permit, t: int) -> None:
        r = permit.round
        per_round = self.honest_permits.setdefault(r, {})
        if issuer in per_round:
            raise OracleViolation("single_voice", f"node {issuer} issued two permits in round {r}")
        dag = self.dag
        missing = dag.missing(permit.position)
        if missing:
            raise OracleViolation("unknown_block", f"node {issuer} permits uncreated block "
                                  + ",".join(short(b) for b in sorted(missing)))
        if dag.respected_mask(permit.position) & self.promised_mask != self.promised_mask:
            self.unsafe_honest_permits += 1
            issuers = self.unsafe_issuers.setdefault(r, set())
            issuers.add(issuer)
            if len(issuers) > self.f:
                raise OracleViolation(
                    "safe_permit", f"round {r}: {len(issuers)} honest nodes issued unsafe permits",
                    tuple(sorted(issuers)))
        if dag.depth(permit.position) < self.max_block_depth - 1:
            self.shallow_honest_permits += 1
        per_round[issuer] = permit.position
        support = sum(1 for p in per_round.values() if p == permit.position)
        if support >= self.threshold and permit.position not in self.promised_positions:
            self.promised_positions.append(permit.position)
            self.promised_mask |= dag.mask_of(permit.position)
            self._dirty = True

    def on_block(self, block: Block, t: int) -> None:
        dag = self.dag
        self.max_block_depth = max(self.max_block_depth, dag.block_depth(block.block_id))
        for tx_id in sorted(committed_by_child(dag, block.block_id)):
            if tx_id in self.committed_txs:
                continue
            tx = dag.txs[tx_id]
            for ref in tx.inputs:
                rivals = (dag.spenders.get(ref, set()) - {tx_id}) & self.committed_txs
                if rivals:
                    raise OracleViolation(
                        "conflicting_commit",
                        f"tx {short(tx_id)} and {short(min(rivals))} both committed",
                        (tx_id, min(rivals)))
            self.committed_txs.add(tx_id)
        self._dirty = True

    # ------------------------------------------------------------------

    def after_event(self, t: int) -> None:
        if self._dirty:
            self._dirty = False
            self.check()

    def check(self) -> None:
        """Run the graph-level checks (i)-(iii) against the current state."""
        self.checks += 1
        dag = self.dag
        stray = dag.committed_mask & ~self.promised_mask
        if stray:
            b = dag.ids_of(stray)
            raise OracleViolation("committed_not_promised",
                                  ",".join(short(x) for x in sorted(b)), tuple(sorted(b)))
        block_resp = self._block_respect_masks()
        pair = independent_pair(dag, self.promised_positions, block_resp)
        if pair:
            raise OracleViolation("independently_promised",
                                  f"{short(pair[0])} / {short(pair[1])}", pair)
        created = []
        for bid in dag.ids():
            pos = dag.blocks[bid].position
            if pos and pos not in created:
                created.append(pos)
        pair = independent_pair(dag, created, block_resp)
        if pair:
            raise OracleViolation("independently_committed",
                                  f"{short(pair[0])} / {short(pair[1])}", pair)

    def _block_respect_masks(self) -> list:
        dag = self.dag
        out = []
        for bid in dag.ids():
            blk = dag.blocks[bid]
            out.append(0 if blk.is_genesis else dag.respected_mask(blk.position))
        return out


def independent_pair(dag, positions, block_resp=None):
    """Two conflicting blocks respected separately by two of ``positions``, or None.

    Blocks ``b1`` and ``b2`` conflict when neither respects the other; they
    are separated when some position respects ``b1`` but not ``b2`` and
    another respects ``b2`` but not ``b1``.
    """
    ids = dag.ids()
    if block_resp is None:
        block_resp = [0 if dag.blocks[b].is_genesis else dag.respected_mask(dag.blocks[b].position)
                      for b in ids]
    masks = [dag.respected_mask(p) for p in positions]
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            d1 = masks[i] & ~masks[j]
            if not d1:
                continue
            d2 = masks[j] & ~masks[i]
            if not d2:
                continue
            for k1 in iter_bits(d1):
                cand = d2 & ~block_resp[k1]
                for k2 in iter_bits(cand):
                    if not block_resp[k2] >> k1 & 1:
                        return ids[k1], ids[k2]
    return None
