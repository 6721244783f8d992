"""Per-node protocol state machine.

A node consumes one :data:`NodeEvent` at a time and returns a list of
actions for the simulator. It owns no clock and no timers: timers are
requested with :class:`ArmTimer` and come back as :class:`TimerFired`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from .core import creator_of, make_block, make_permit, make_proposal, make_timeout, quorum
from .crypto import SignatureScheme, Signer
from .dag import BlockDag, InsertStatus, Reason
from .ledger import committed_by_child
from .messages import (
    Block,
    FetchRequest,
    FetchResponse,
    NodeId,
    Permit,
    Position,
    Proof,
    Proposal,
    Round,
    TimeoutBundle,
    TimeoutMsg,
    Transaction,
    short,
)

BROADCAST = -1


class TimerKind(str, enum.Enum):
    CREATOR = "creator"
    ROUND = "round"


class Phase(str, enum.Enum):
    IDLE = "idle"
    COLLECTING = "collecting"
    AWAITING = "awaiting"


@dataclass(frozen=True)
class Deliver:
    message: object
    sender: NodeId


@dataclass(frozen=True)
class TimerFired:
    kind: TimerKind
    round: Round


@dataclass(frozen=True)
class InjectTx:
    tx: Transaction


NodeEvent = Union[Deliver, TimerFired, InjectTx]


@dataclass(frozen=True)
class Send:
    to: NodeId  # BROADCAST means every other node
    message: object


@dataclass(frozen=True)
class ArmTimer:
    kind: TimerKind
    round: Round
    duration: int


@dataclass(frozen=True)
class CommitNotice:
    tx_ids: tuple


@dataclass(frozen=True)
class Log:
    kind: str
    detail: str


NodeAction = Union[Send, ArmTimer, CommitNotice, Log]


@dataclass(frozen=True)
class TimerConfig:
    delta: int = 1000
    creator_timeout: int = 2500
    round_timeout: int = 5500

    def satisfies_timing_bounds(self) -> bool:
        """2Δ < creator timeout < 3Δ and 5Δ < round timeout."""
        d = self.delta
        return 2 * d < self.creator_timeout < 3 * d and 5 * d < self.round_timeout


class Node:
    """Honest protocol participant."""

    def __init__(self, node_id: NodeId, n: int, f: int, genesis: Block,
                 signer: Signer, scheme: SignatureScheme, timers: TimerConfig):
        self.id = node_id
        self.n, self.f = n, f
        self.q = quorum(f)
        self.signer = signer
        self.scheme = scheme
        self.timers = timers
        self.dag = BlockDag(genesis, n, f, scheme)
        self.round: Round = 0
        self.current: Position = frozenset({genesis.block_id})
        self.phase = Phase.IDLE
        self.timeouts: dict[Round, dict[NodeId, TimeoutMsg]] = {}
        self.permits_buffer: dict[Round, dict[NodeId, Permit]] = {}
        self.mempool: dict[bytes, Transaction] = {}
        self.last_result: Block | Proposal | TimeoutBundle | None = None
        self.last_result_broadcast = False
        self.committed: set = set()
        self.timeout_sent: set = set()
        self.permit_sent: set = set()
        self._result_pending: dict[bytes, NodeId] = {}  # block id -> sender
        self._pending_proposals: list[tuple[Proposal, NodeId]] = []
        self._fetching: set = set()
        self._replied: set = set()
        self._proposal_due: Round | None = None
        self.started = False

    # ------------------------------------------------------------------
    # entry points

    def start(self) -> list:
        self.started = True
        return self.start_round("genesis")

    def handle(self, event) -> list:
        if isinstance(event, Deliver):
            msg, sender = event.message, event.sender
            if isinstance(msg, Permit):
                return self.handle_permit(msg, sender)
            if isinstance(msg, (Block, Proposal)):
                return self.handle_result(msg, sender)
            if isinstance(msg, TimeoutMsg):
                return self.handle_timeout_msg(msg, sender)
            if isinstance(msg, TimeoutBundle):
                return self.handle_bundle(msg, sender)
            if isinstance(msg, FetchRequest):
                return self.handle_fetch_request(msg, sender)
            if isinstance(msg, FetchResponse):
                return self.handle_fetch_response(msg, sender)
            return [Log("drop", f"unknown message from {sender}")]
        if isinstance(event, TimerFired):
            if event.kind is TimerKind.CREATOR:
                return self.on_creator_timeout(event.round)
            return self.on_round_timeout(event.round)
        if isinstance(event, InjectTx):
            return self.inject(event.tx)
        raise TypeError(f"unknown event {event!r}")

    # ------------------------------------------------------------------
    # round lifecycle

    def start_round(self, via: str) -> list:
        r = self.round
        creator = creator_of(r, self.n)
        acts: list = [Log("round", f"{r} via {via}")]
        permit = make_permit(self.signer, self.id, r, self.current)
        self.permit_sent.add(r)
        acts.append(Send(creator, permit))
        acts.append(ArmTimer(TimerKind.ROUND, r, self.timers.round_timeout))
        if creator == self.id:
            self.phase = Phase.COLLECTING
            acts.append(ArmTimer(TimerKind.CREATOR, r, self.timers.creator_timeout))
            acts += self._try_create_block()
        else:
            self.phase = Phase.AWAITING
        return acts

    def _advance(self, to_round: Round, via: str) -> list:
        """Leave the current round and start ``to_round``."""
        acts: list = []
        if not self.last_result_broadcast and self.last_result is not None:
            # answer timeouts from rounds we have now left behind
            for r in sorted(k for k in self.timeouts if k < to_round):
                for issuer in sorted(self.timeouts[r]):
                    if issuer != self.id:
                        acts += self._reply(issuer)
        for r in [k for k in self.timeouts if k < to_round]:
            del self.timeouts[r]
        for r in [k for k in self.permits_buffer if k < to_round]:
            del self.permits_buffer[r]
        self.round = to_round
        return acts + self.start_round(via)

    def _reply(self, to: NodeId) -> list:
        if self.last_result is None:
            return []
        key = (to, self.last_result.encoded)
        if key in self._replied:
            return []
        self._replied.add(key)
        return [Send(to, self.last_result)]

    # ------------------------------------------------------------------
    # creator side

    def handle_permit(self, permit: Permit, sender: NodeId) -> list:
        r = permit.round
        if not permit.position or not self.scheme.verify(permit.issuer, permit.signing_bytes,
                                                         permit.signature):
            return [Log("dropped_permit", f"bad signature from {sender}")]
        if r < self.round:
            return [Log("dropped_permit", f"stale round {r} from {permit.issuer}")]
        if r > self.round + self.n:
            return [Log("dropped_permit", f"round {r} beyond window from {permit.issuer}")]
        if creator_of(r, self.n) != self.id:
            return [Log("dropped_permit", f"not creator of {r}")]
        buf = self.permits_buffer.setdefault(r, {})
        if permit.issuer in buf:
            return [Log("dropped_permit", f"duplicate from {permit.issuer} round {r}")]
        buf[permit.issuer] = permit
        acts = self._fetch(self.dag.missing(permit.position), sender)
        if r == self.round and self.phase is Phase.COLLECTING:
            acts += self._try_create_block()
        return acts

    def _known_permits(self) -> list[Permit]:
        buf = self.permits_buffer.get(self.round, {})
        return [buf[i] for i in sorted(buf) if not self.dag.missing(buf[i].position)]

    def _try_create_block(self) -> list:
        by_position: dict = {}
        for p in self._known_permits():
            by_position.setdefault(p.position, []).append(p)
        for pos in sorted(by_position, key=lambda s: sorted(s)):
            permits = by_position[pos]
            if len(permits) >= self.q:
                proof = Proof(frozenset(permits[: self.q]))
                block = make_block(self.signer, self.id, proof, self.select_transactions(pos))
                self.phase = Phase.AWAITING
                return [Log("create_block", f"{short(block.block_id)} round {self.round}"),
                        Send(BROADCAST, block), Send(self.id, block)]
        return []

    def on_creator_timeout(self, round_: Round) -> list:
        if round_ != self.round or self.phase is not Phase.COLLECTING:
            return []
        self.phase = Phase.AWAITING
        return self._issue_proposal()

    def _issue_proposal(self) -> list:
        r = self.round
        permits = self._known_permits()
        if len(permits) < self.q:
            if len(self.permits_buffer.get(r, {})) >= self.q:
                # enough permits, but some endorse blocks still being fetched
                self._proposal_due = r
                return [Log("creator_timeout", f"awaiting blocks for round {r} proposal")]
            return [Log("creator_timeout", f"{len(permits)} permits in round {r}")]
        self._proposal_due = None
        pos = self.dag.minimal_position(p.position for p in permits)
        proposal = make_proposal(self.signer, self.id, pos, frozenset(permits))
        return [Log("create_proposal", f"round {r} position "
                    + ",".join(short(b) for b in sorted(pos))),
                Send(BROADCAST, proposal), Send(self.id, proposal)]

    def select_transactions(self, pos: Position) -> tuple:
        """Mempool transactions that are safe to place on top of ``pos``."""
        path = self.dag.closure_mask(pos)
        on_path = {}
        selected: list = []
        taken: set = set()
        produced: dict = {}  # tx_id -> Transaction available as an input source
        for tx in self.mempool.values():
            if tx.is_mint:
                continue
            locs = self.dag.tx_blocks.get(tx.tx_id, ())
            if any(self.dag.bit(b) & path for b in locs):
                continue
            if any(self.dag.spenders.get(ref, set()) - {tx.tx_id} for ref in tx.inputs):
                continue
            if not taken.isdisjoint(tx.inputs):
                continue
            value_in = 0
            ok = True
            for ref in tx.inputs:
                src = produced.get(ref.tx_id) or self._on_path_tx(ref.tx_id, path, on_path)
                if src is None or ref.index >= len(src.outputs):
                    ok = False
                    break
                value_in += src.outputs[ref.index].amount
            if not ok or value_in != sum(o.amount for o in tx.outputs):
                continue
            selected.append(tx)
            taken |= tx.inputs
            produced[tx.tx_id] = tx
        return tuple(selected)

    def _on_path_tx(self, tx_id: bytes, path: int, cache: dict):
        if tx_id not in cache:
            src = None
            locs = self.dag.tx_blocks.get(tx_id, ())
            if any(self.dag.bit(b) & path for b in locs):
                src = self.dag.txs[tx_id]
                # outputs of contested transactions are not spent on top of
                if any(self.dag.spenders.get(r, set()) - {tx_id} for r in src.inputs):
                    src = None
            cache[tx_id] = src
        return cache[tx_id]

    # ------------------------------------------------------------------
    # results

    def handle_result(self, result, sender: NodeId) -> list:
        if isinstance(result, Block):
            return self._handle_block(result, sender, as_result=True)
        return self._handle_proposal(result, sender)

    def _handle_block(self, block: Block, sender: NodeId, as_result: bool) -> list:
        res = self.dag.insert_block(block)
        if res.status is InsertStatus.REJECTED:
            return [Log("drop_block", f"{res.reason.value} {res.detail}".strip())]
        if res.status is InsertStatus.PENDING:
            if as_result:
                self._result_pending[block.block_id] = sender
            return self._fetch(res.missing, sender)
        acts: list = []
        if res.status is InsertStatus.INSERTED:
            acts += self._on_inserted(block)
        if as_result:
            acts += self._accept_block(block)
        acts += self._drain(block.block_id, sender)
        return acts

    def _accept_block(self, block: Block) -> list:
        if block.round < self.round:
            return []
        self.current = frozenset({block.block_id})
        self.last_result = block
        self.last_result_broadcast = block.creator == self.id
        return self._advance(block.round + 1, "block")

    def _on_inserted(self, block: Block) -> list:
        acts: list = []
        newly = sorted(committed_by_child(self.dag, block.block_id) - self.committed)
        if newly:
            self.committed.update(newly)
            acts.append(CommitNotice(tuple(newly)))
        return acts

    def _drain(self, block_id: bytes, sender: NodeId) -> list:
        """Process pending blocks and proposals unblocked by ``block_id``."""
        acts: list = []
        stack = [block_id]
        while stack:
            bid = stack.pop()
            for blk in self.dag.ready_waiters(bid):
                res = self.dag.insert_block(blk)
                if res.status is not InsertStatus.INSERTED:
                    continue
                acts += self._on_inserted(blk)
                if self._result_pending.pop(blk.block_id, None) is not None:
                    acts += self._accept_block(blk)
                stack.append(blk.block_id)
        if self.phase is Phase.COLLECTING:
            acts += self._try_create_block()
        elif self._proposal_due == self.round:
            acts += self._issue_proposal()
        if self._pending_proposals:
            waiting, self._pending_proposals = self._pending_proposals, []
            for prop, frm in waiting:
                acts += self._handle_proposal(prop, frm)
        return acts

    def _handle_proposal(self, proposal: Proposal, sender: NodeId) -> list:
        verdict = self.dag.validate_proposal(proposal)
        if verdict.reason is Reason.UNKNOWN_BLOCK:
            self._pending_proposals.append((proposal, sender))
            return self._fetch(verdict.missing, sender)
        if not verdict.accepted:
            return [Log("drop_proposal", verdict.reason.value)]
        if verdict.round < self.round:
            return []
        self.current = verdict.position
        self.last_result = proposal
        self.last_result_broadcast = proposal.creator == self.id
        return self._advance(verdict.round + 1, "proposal")

    # ------------------------------------------------------------------
    # timeouts

    def on_round_timeout(self, round_: Round) -> list:
        if round_ != self.round or round_ in self.timeout_sent:
            return []
        self.timeout_sent.add(round_)
        msg = make_timeout(self.signer, self.id, round_)
        self.timeouts.setdefault(round_, {})[self.id] = msg
        return [Send(BROADCAST, msg)] + self._check_timeouts()

    def handle_timeout_msg(self, msg: TimeoutMsg, sender: NodeId) -> list:
        if not self.scheme.verify(msg.issuer, msg.signing_bytes, msg.signature):
            return [Log("drop_timeout", f"bad signature from {sender}")]
        if msg.round < self.round:
            return self._reply(sender)
        self.timeouts.setdefault(msg.round, {}).setdefault(msg.issuer, msg)
        return self._check_timeouts()

    def handle_bundle(self, bundle: TimeoutBundle, sender: NodeId) -> list:
        if not check_bundle(bundle, self.f, self.scheme):
            return [Log("drop_bundle", f"invalid bundle from {sender}")]
        if bundle.round < self.round:
            return []
        slot = self.timeouts.setdefault(bundle.round, {})
        for m in sorted(bundle.msgs, key=lambda m: m.issuer):
            slot.setdefault(m.issuer, m)
        return self._check_timeouts()

    def _check_timeouts(self) -> list:
        ready = [r for r, msgs in self.timeouts.items()
                 if r >= self.round and len(msgs) >= self.q]
        if not ready:
            return []
        r = max(ready)
        msgs = self.timeouts[r]
        bundle = TimeoutBundle(r, frozenset(msgs[i] for i in sorted(msgs)[: self.q]))
        self.last_result = bundle
        self.last_result_broadcast = True
        return [Send(BROADCAST, bundle)] + self._advance(r + 1, "timeouts")

    # ------------------------------------------------------------------
    # fetching and transactions

    def _fetch(self, missing, sender: NodeId) -> list:
        if sender == self.id:
            return []
        want = frozenset(b for b in missing if (b, sender) not in self._fetching)
        if not want:
            return []
        self._fetching |= {(b, sender) for b in want}
        return [Send(sender, FetchRequest(want))]

    def handle_fetch_request(self, req: FetchRequest, sender: NodeId) -> list:
        found = tuple(self.dag.blocks[b] for b in sorted(req.block_ids) if b in self.dag)
        return [Send(sender, FetchResponse(found))] if found else []

    def handle_fetch_response(self, resp: FetchResponse, sender: NodeId) -> list:
        acts: list = []
        for blk in resp.blocks:
            acts += self._handle_block(blk, sender, as_result=False)
        return acts

    def inject(self, tx: Transaction) -> list:
        if tx.tx_id in self.mempool or tx.is_mint:
            return [Log("drop_tx", short(tx.tx_id))]
        for other in self.mempool.values():
            if not other.inputs.isdisjoint(tx.inputs):
                return [Log("drop_tx", f"{short(tx.tx_id)} conflicts with mempool")]
        self.mempool[tx.tx_id] = tx
        return [Log("mempool", short(tx.tx_id))]


def check_bundle(bundle: TimeoutBundle, f: int, scheme: SignatureScheme) -> bool:
    """2f+1 distinct, correctly signed timeouts for the bundle's round."""
    issuers = {m.issuer for m in bundle.msgs}
    if len(issuers) != len(bundle.msgs) or len(issuers) < quorum(f):
        return False
    return all(m.round == bundle.round and scheme.verify(m.issuer, m.signing_bytes, m.signature)
               for m in bundle.msgs)


__all__ = [
    "BROADCAST", "TimerKind", "Phase", "Deliver", "TimerFired", "InjectTx", "Send", "ArmTimer",
    "CommitNotice", "Log", "TimerConfig", "Node", "check_bundle",
]
