"""Append-only block graph.

Blocks are indexed by insertion order; ancestry is kept as integer
bitmasks so that "lies on a path to this position" is a single AND.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .core import ProofError, check_permits, creator_of, validate_proof
from .crypto import SignatureScheme
from .messages import Block, BlockId, OutputRef, Position, Proposal, Round, short


class UnknownBlock(KeyError):
    pass


class InsertStatus(enum.Enum):
    INSERTED = "inserted"
    DUPLICATE = "duplicate"
    PENDING = "pending"
    REJECTED = "rejected"


class Reason(str, enum.Enum):
    BAD_PROOF = "bad_proof"
    BAD_SIGNATURE = "bad_signature"
    WRONG_CREATOR = "wrong_creator"
    INSUFFICIENT_PERMITS = "insufficient_permits"
    DUPLICATE_ISSUER = "duplicate_issuer"
    MIXED_ROUND = "mixed_round"
    NOT_MINIMAL = "not_minimal"
    UNKNOWN_BLOCK = "unknown_block"
    NOT_GENESIS = "not_genesis"


@dataclass(frozen=True)
class InsertResult:
    status: InsertStatus
    missing: frozenset = frozenset()
    reason: Reason | None = None
    detail: str = ""

    @property
    def stored(self) -> bool:
        return self.status in (InsertStatus.INSERTED, InsertStatus.DUPLICATE)


@dataclass(frozen=True)
class ProposalVerdict:
    accepted: bool
    round: Round | None = None
    position: Position | None = None
    reason: Reason | None = None
    missing: frozenset = frozenset()
    detail: str = ""


@dataclass
class PendingPool:
    """Validated blocks waiting for unknown parents, keyed by missing id."""

    blocks: dict = field(default_factory=dict)  # BlockId -> Block
    waiting_on: dict = field(default_factory=lambda: defaultdict(set))  # missing -> {BlockId}

    def add(self, block: Block, missing: Iterable[BlockId]) -> None:
        self.blocks[block.block_id] = block
        for m in missing:
            self.waiting_on[m].add(block.block_id)

    def waiters(self, block_id: BlockId) -> list[Block]:
        ids = self.waiting_on.pop(block_id, set())
        return [self.blocks[i] for i in sorted(ids) if i in self.blocks]

    def discard(self, block_id: BlockId) -> None:
        self.blocks.pop(block_id, None)

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)


_PROOF_REASONS = {
    "InsufficientPermits": Reason.INSUFFICIENT_PERMITS,
    "DuplicateIssuer": Reason.DUPLICATE_ISSUER,
    "MixedRound": Reason.MIXED_ROUND,
    "BadSignature": Reason.BAD_SIGNATURE,
}


class BlockDag:
    def __init__(self, genesis: Block, n: int, f: int, scheme: SignatureScheme):
        if not genesis.is_genesis:
            raise ValueError("genesis must not carry a proof")
        self.n, self.f, self.scheme = n, f, scheme
        self.genesis = genesis
        self.blocks: dict[BlockId, Block] = {}
        self.children: dict[BlockId, set] = {}
        self.pending = PendingPool()
        self._bit: dict[BlockId, int] = {}
        self._ids: list[BlockId] = []
        self._anc: dict[BlockId, int] = {}
        self._depth: dict[BlockId, int] = {}
        self._at_depth: dict[int, int] = defaultdict(int)  # depth -> mask
        self._committed_mask = 0
        # transaction indices shared with the ledger and creators
        self.tx_blocks: dict[bytes, list] = defaultdict(list)  # tx_id -> [BlockId]
        self.spenders: dict[OutputRef, set] = defaultdict(set)  # ref -> {tx_id}
        self.txs: dict[bytes, object] = {}
        self._store(genesis, 0, 0)

    # ------------------------------------------------------------------
    # storage

    def _store(self, block: Block, depth: int, anc: int) -> None:
        bid = block.block_id
        bit = 1 << len(self._ids)
        self._ids.append(bid)
        self._bit[bid] = bit
        self.blocks[bid] = block
        self.children[bid] = set()
        self._anc[bid] = anc
        self._depth[bid] = depth
        self._at_depth[depth] |= bit
        for parent in block.position:
            if not self.children[parent]:
                self._committed_mask |= self._bit[parent]
            self.children[parent].add(bid)
        for tx in block.transactions:
            self.tx_blocks[tx.tx_id].append(bid)
            self.txs.setdefault(tx.tx_id, tx)
            for ref in tx.inputs:
                self.spenders[ref].add(tx.tx_id)

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def genesis_id(self) -> BlockId:
        return self.genesis.block_id

    def ids(self) -> list[BlockId]:
        """Block ids in insertion order (parents before children)."""
        return list(self._ids)

    def missing(self, pos: Iterable[BlockId]) -> frozenset:
        return frozenset(b for b in pos if b not in self.blocks)

    def check_block(self, block: Block) -> InsertResult | None:
        """Graph-independent validation; None when the block is well formed."""
        if block.is_genesis:
            return InsertResult(InsertStatus.REJECTED, reason=Reason.NOT_GENESIS)
        try:
            round_, pos = validate_proof(block.proof, self.n, self.f, self.scheme)
        except ProofError as exc:
            return InsertResult(InsertStatus.REJECTED, reason=Reason.BAD_PROOF,
                                detail=f"{type(exc).__name__}: {exc}")
        sig = block.signature
        if sig is None or sig.signer != creator_of(round_, self.n):
            return InsertResult(InsertStatus.REJECTED, reason=Reason.WRONG_CREATOR,
                                detail=f"round {round_} signed by {block.creator}")
        if not self.scheme.verify(sig.signer, block.signing_bytes, sig):
            return InsertResult(InsertStatus.REJECTED, reason=Reason.BAD_SIGNATURE)
        return None

    def insert_block(self, block: Block) -> InsertResult:
        bid = block.block_id
        if bid in self.blocks:
            return InsertResult(InsertStatus.DUPLICATE)
        bad = self.check_block(block)
        if bad is not None:
            return bad
        missing = self.missing(block.position)
        if missing:
            self.pending.add(block, missing)
            return InsertResult(InsertStatus.PENDING, missing=missing)
        self.pending.discard(bid)
        depth = 1 + min(self._depth[p] for p in block.position)
        anc = 0
        for p in block.position:
            anc |= self._anc[p] | self._bit[p]
        self._store(block, depth, anc)
        return InsertResult(InsertStatus.INSERTED)

    def ready_waiters(self, block_id: BlockId) -> list[Block]:
        """Pending blocks that no longer miss any parent after ``block_id`` arrived."""
        out = []
        for blk in self.pending.waiters(block_id):
            if blk.block_id not in self.blocks and not self.missing(blk.position):
                out.append(blk)
        return out

    # ------------------------------------------------------------------
    # queries

    def _require(self, block_id: BlockId) -> None:
        if block_id not in self.blocks:
            raise UnknownBlock(short(block_id))

    def block_depth(self, block_id: BlockId) -> int:
        self._require(block_id)
        return self._depth[block_id]

    def depth(self, pos: Iterable[BlockId]) -> int:
        """Shortest genesis path to the position: its shallowest member."""
        pos = list(pos)
        if not pos:
            raise ValueError("empty position")
        for b in pos:
            self._require(b)
        return min(self._depth[b] for b in pos)

    def is_committed(self, block_id: BlockId) -> bool:
        self._require(block_id)
        return bool(self.children[block_id])

    def ancestors(self, block_id: BlockId) -> frozenset:
        self._require(block_id)
        return self.ids_of(self._anc[block_id])

    def ids_of(self, mask: int) -> frozenset:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self._ids[i])
            mask >>= 1
            i += 1
        return frozenset(out)

    def mask_of(self, ids: Iterable[BlockId]) -> int:
        m = 0
        for b in ids:
            m |= self._bit[b]
        return m

    def bit(self, block_id: BlockId) -> int:
        return self._bit[block_id]

    def ancestor_mask(self, block_id: BlockId) -> int:
        return self._anc[block_id]

    @property
    def committed_mask(self) -> int:
        return self._committed_mask

    def closure_mask(self, pos: Iterable[BlockId]) -> int:
        """Members of the position plus all their ancestors."""
        m = 0
        for b in pos:
            self._require(b)
            m |= self._anc[b] | self._bit[b]
        return m

    def respected_mask(self, pos: Iterable[BlockId]) -> int:
        pos = list(pos)
        m = self.closure_mask(pos)
        limit = self.depth(pos) - 2
        stale = 0
        for d in range(limit + 1):
            stale |= self._at_depth.get(d, 0)
        return m | (stale & ~self._committed_mask)

    def respects(self, pos: Iterable[BlockId], block_id: BlockId) -> bool:
        pos = list(pos)
        self._require(block_id)
        if self.closure_mask(pos) & self._bit[block_id]:
            return True
        return (not self.children[block_id]
                and self._depth[block_id] <= self.depth(pos) - 2)

    def block_respects(self, block_id: BlockId, other: BlockId) -> bool:
        """A block respects what its position respects; genesis respects nothing."""
        blk = self.blocks[block_id]
        if blk.is_genesis:
            return False
        return self.respects(blk.position, other)

    def minimal_position(self, positions: Iterable[Iterable[BlockId]]) -> Position:
        """Smallest subset of the union of ``positions`` that respects every member.

        Blocks are dropped in ascending id order, repeating passes until no
        block can be removed without losing respect for some input block.
        """
        union: set = set()
        for pos in positions:
            union.update(pos)
        if not union:
            raise ValueError("no positions given")
        for b in union:
            self._require(b)
        target = self.mask_of(union)
        current = set(union)
        changed = True
        while changed and len(current) > 1:
            changed = False
            for b in sorted(current):
                if len(current) == 1:
                    break
                rest = current - {b}
                if self.respected_mask(rest) & target == target:
                    current = rest
                    changed = True
        return frozenset(current)

    def validate_proposal(self, proposal: Proposal) -> ProposalVerdict:
        try:
            round_ = check_permits(proposal.permits, self.n, self.f, self.scheme,
                                   same_position=False)
        except ProofError as exc:
            reason = _PROOF_REASONS.get(type(exc).__name__, Reason.BAD_PROOF)
            return ProposalVerdict(False, reason=reason, detail=str(exc))
        if proposal.signature.signer != creator_of(round_, self.n):
            return ProposalVerdict(False, reason=Reason.WRONG_CREATOR)
        if not self.scheme.verify(proposal.signature.signer, proposal.signing_bytes,
                                  proposal.signature):
            return ProposalVerdict(False, reason=Reason.BAD_SIGNATURE)
        referenced = set(proposal.position)
        for p in proposal.permits:
            referenced.update(p.position)
        missing = self.missing(referenced)
        if missing:
            return ProposalVerdict(False, reason=Reason.UNKNOWN_BLOCK, missing=missing)
        if not proposal.position:
            return ProposalVerdict(False, reason=Reason.NOT_MINIMAL)
        expected = self.minimal_position(p.position for p in proposal.permits)
        if expected != proposal.position:
            return ProposalVerdict(False, reason=Reason.NOT_MINIMAL)
        return ProposalVerdict(True, round=round_, position=proposal.position)

    # ------------------------------------------------------------------
    # export

    def sort_key(self, block_id: BlockId) -> tuple:
        blk = self.blocks[block_id]
        return (self._depth[block_id], blk.round, blk.creator, block_id)

    def export(self) -> str:
        """One line per block: ``id parents... round creator depth committed``."""
        lines = []
        for bid in sorted(self.blocks, key=self.sort_key):
            blk = self.blocks[bid]
            parents = " ".join(p.hex() for p in sorted(blk.position))
            round_ = "-" if blk.is_genesis else str(blk.round)
            creator = "-" if blk.is_genesis else str(blk.creator)
            fields = [bid.hex()] + ([parents] if parents else []) + [
                round_, creator, str(self._depth[bid]), "1" if self.children[bid] else "0"]
            lines.append(" ".join(fields))
        return "\n".join(lines) + "\n"


def parse_export(text: str) -> list[dict]:
    """Parse :meth:`BlockDag.export` output back into records."""
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        bid, rest = parts[0], parts[1:]
        parents, (round_, creator, depth, committed) = rest[:-4], rest[-4:]
        out.append({
            "id": bytes.fromhex(bid),
            "parents": [bytes.fromhex(p) for p in parents],
            "round": None if round_ == "-" else int(round_),
            "creator": None if creator == "-" else int(creator),
            "depth": int(depth),
            "committed": committed == "1",
        })
    return out
