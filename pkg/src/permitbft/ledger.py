"""UTXO ledger inferred from a block graph.

A transaction is committed once it sits in a block ``b`` that has a child
whose ancestry contains no conflicting transaction. Ancestry is the right
set here: the committed blocks a child respects are exactly its ancestors,
because the depth clause of ``respects`` only ever adds uncommitted blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .dag import BlockDag
from .messages import BlockId, OutputRef, Transaction, TxOutput

__all__ = [
    "OutputRef", "Transaction", "TxOutput", "InvalidSpend", "LedgerView", "UtxoSet",
    "conflicts", "committed_by_child", "committed_transactions", "frozen_refs",
    "linearize", "ledger_view", "execute", "ledger_dump", "total_value",
]


class InvalidSpend(RuntimeError):
    """A committed transaction tried to spend an output that is already spent."""


def conflicts(t1: Transaction, t2: Transaction) -> bool:
    return t1.tx_id != t2.tx_id and not t1.inputs.isdisjoint(t2.inputs)


def _conflicting_ids(dag: BlockDag, tx: Transaction) -> set:
    out = set()
    for ref in tx.inputs:
        out.update(dag.spenders.get(ref, ()))
    out.discard(tx.tx_id)
    return out


def committed_by_child(dag: BlockDag, child_id: BlockId) -> set:
    """Transactions of the child's parents that the child witnesses as committed."""
    child = dag.blocks[child_id]
    anc = dag.ancestor_mask(child_id)
    out = set()
    for parent_id in sorted(child.position):
        for tx in dag.blocks[parent_id].transactions:
            if tx.tx_id in out:
                continue
            clean = True
            for other in _conflicting_ids(dag, tx):
                if any(dag.bit(b) & anc for b in dag.tx_blocks[other]):
                    clean = False
                    break
            if clean:
                out.add(tx.tx_id)
    return out


def committed_transactions(dag: BlockDag) -> frozenset:
    out: set = set()
    for bid in dag.ids():
        if not dag.blocks[bid].is_genesis:
            out |= committed_by_child(dag, bid)
    return frozenset(out)


def frozen_refs(dag: BlockDag, committed: Iterable[bytes] | None = None) -> frozenset:
    """Outputs contested by >= 2 transactions in committed blocks, none committed."""
    committed = committed_transactions(dag) if committed is None else frozenset(committed)
    cmask = dag.committed_mask
    frozen = set()
    for ref, spenders in dag.spenders.items():
        if len(spenders) < 2:
            continue
        in_committed = [t for t in spenders
                        if any(dag.bit(b) & cmask for b in dag.tx_blocks[t])]
        if len(in_committed) >= 2 and not any(t in committed for t in in_committed):
            frozen.add(ref)
    return frozenset(frozen)


def _finalized_blocks(dag: BlockDag) -> list[BlockId]:
    """Committed blocks with some stored block two or more levels deeper.

    Returned ancestors-first; among blocks whose ancestors are already
    placed, the smallest (depth, round, creator, id) goes next.
    """
    max_depth = max(dag.block_depth(b) for b in dag.ids())
    cmask = dag.committed_mask
    chosen = [b for b in dag.ids()
              if dag.bit(b) & cmask and dag.block_depth(b) + 2 <= max_depth]
    remaining = sorted(chosen, key=dag.sort_key)
    placed_mask = 0
    chosen_mask = dag.mask_of(chosen)
    order = []
    while remaining:
        for i, b in enumerate(remaining):
            if dag.ancestor_mask(b) & chosen_mask & ~placed_mask == 0:
                break
        b = remaining.pop(i)
        order.append(b)
        placed_mask |= dag.bit(b)
    return order


def linearize(dag: BlockDag, committed: Iterable[bytes] | None = None) -> tuple[list, tuple]:
    """Return (finalized_order, executable_head).

    The head is semantically unordered; it is returned in block order so
    that executing it is deterministic.
    """
    committed = committed_transactions(dag) if committed is None else frozenset(committed)
    finalized: list = []
    seen: set = set()
    for bid in _finalized_blocks(dag):
        for tx in dag.blocks[bid].transactions:
            if tx.tx_id in committed and tx.tx_id not in seen:
                seen.add(tx.tx_id)
                finalized.append(tx.tx_id)
    head = []
    for bid in sorted(dag.ids(), key=dag.sort_key):
        for tx in dag.blocks[bid].transactions:
            if tx.tx_id in committed and tx.tx_id not in seen:
                seen.add(tx.tx_id)
                head.append(tx.tx_id)
    return finalized, tuple(head)


@dataclass(frozen=True)
class LedgerView:
    committed_txs: frozenset
    frozen_refs: frozenset
    finalized_order: tuple
    executable_head: tuple
    transactions: Mapping = field(repr=False, default_factory=dict)
    mints: frozenset = frozenset()


def ledger_view(dag: BlockDag) -> LedgerView:
    committed = committed_transactions(dag)
    finalized, head = linearize(dag, committed)
    return LedgerView(
        committed_txs=committed,
        frozen_refs=frozen_refs(dag, committed),
        finalized_order=tuple(finalized),
        executable_head=head,
        transactions=dict(dag.txs),
        mints=frozenset(tx.tx_id for tx in dag.genesis.transactions),
    )


@dataclass(frozen=True)
class UtxoSet:
    spendable: Mapping = field(default_factory=dict)  # OutputRef -> TxOutput
    frozen: Mapping = field(default_factory=dict)
    spent: frozenset = frozenset()
    applied: frozenset = frozenset()
    rejected: frozenset = frozenset()


def total_value(outputs: Mapping) -> int:
    return sum(o.amount for o in outputs.values())


def execute(view: LedgerView, state: UtxoSet | None = None) -> UtxoSet:
    """Apply finalized then head transactions; already-applied ones are skipped.

    A transaction whose inputs are not yet available (frozen, or produced by
    a transaction that is not executable) stays unapplied. Spending an output
    that an applied transaction already consumed raises :class:`InvalidSpend`.
    """
    state = state or UtxoSet()
    spendable = dict(state.spendable)
    frozen = dict(state.frozen)
    spent = set(state.spent)
    applied = set(state.applied)
    rejected = set(state.rejected)
    for ref in sorted(view.frozen_refs):
        if ref in spendable:
            frozen[ref] = spendable.pop(ref)

    queue = [t for t in (*view.finalized_order, *view.executable_head)
             if t not in applied and t not in rejected]
    progress = True
    while queue and progress:
        progress = False
        deferred = []
        for tid in queue:
            tx = view.transactions[tid]
            if tx.is_mint:
                if tid not in view.mints:
                    rejected.add(tid)
                    continue
            else:
                double = [r for r in tx.inputs if r in spent]
                if double:
                    raise InvalidSpend(f"tx {tid.hex()[:8]} spends consumed output")
                if not all(r in spendable for r in tx.inputs):
                    deferred.append(tid)
                    continue
                value_in = sum(spendable[r].amount for r in tx.inputs)
                if value_in != sum(o.amount for o in tx.outputs):
                    rejected.add(tid)
                    continue
                for r in tx.inputs:
                    del spendable[r]
                    spent.add(r)
            for i, out in enumerate(tx.outputs):
                ref = OutputRef(tid, i)
                (frozen if ref in view.frozen_refs else spendable)[ref] = out
            applied.add(tid)
            progress = True
        queue = deferred
    return UtxoSet(spendable, frozen, frozenset(spent), frozenset(applied), frozenset(rejected))


def ledger_dump(view: LedgerView) -> str:
    """``tx_id status`` lines: final (in order), head, then frozen inputs."""
    lines = [f"{t.hex()} final" for t in view.finalized_order]
    lines += [f"{t.hex()} head" for t in view.executable_head]
    frozen_txs = sorted({tid for tid, tx in view.transactions.items()
                         if not tx.inputs.isdisjoint(view.frozen_refs)})
    lines += [f"{t.hex()} frozen-input" for t in frozen_txs]
    return "\n".join(lines) + ("\n" if lines else "")
