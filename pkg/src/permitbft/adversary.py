"""Scripted byzantine behaviour.

A byzantine node wraps an honest :class:`~permitbft.node.Node` (its
"shadow") that tracks protocol state, and rewrites the shadow's outgoing
actions according to a strategy. Its signer only holds byzantine
identities, so any attempt to sign for an honest node raises
:class:`~permitbft.crypto.ForgeryError`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .core import make_block, make_permit, make_timeout
from .crypto import Signer
from .messages import Block, Permit, Transaction, TxOutput, message_round
from .node import BROADCAST, ArmTimer, Node, Send


@dataclass(frozen=True)
class Silent:
    """Never sends anything."""


@dataclass(frozen=True)
class CrashAt:
    """Honest until entering ``round``, silent afterwards."""

    round: int


@dataclass(frozen=True)
class EquivocateBlocks:
    """As creator, send ``k`` conflicting variants of its block to disjoint groups.

    With ``abstain`` the node withholds its permits after equivocating, so
    honest creators cannot reach a quorum on a single variant without it.
    """

    k: int = 2
    abstain: bool = True


@dataclass(frozen=True)
class WithholdFrom:
    """Honest, except that nothing is ever sent to ``targets``."""

    targets: frozenset = frozenset()


@dataclass(frozen=True)
class StalePermit:
    """Permits endorse the position held ``lag`` rounds earlier."""

    lag: int = 1


@dataclass(frozen=True)
class SpamTimeouts:
    """On every round entry, broadcast timeouts for this and the next ``ahead`` rounds."""

    ahead: int = 2


@dataclass(frozen=True)
class ScriptStep:
    time: int
    kind: str  # "timeout" or "permit"
    round: int
    to: int = BROADCAST
    position: str = "current"  # "current" or "genesis"


@dataclass(frozen=True)
class Custom:
    """Timed scripted sends, plus an optional per-event handler.

    ``handler(node, event, view)`` sees the byzantine node, the event and
    the simulator (global dag, in-flight honest messages) and returns the
    actions to emit, or None to fall back to honest behaviour.
    """

    steps: tuple = ()
    handler: Callable | None = None


Strategy = Silent | CrashAt | EquivocateBlocks | WithholdFrom | StalePermit | SpamTimeouts | Custom


class ByzantineNode:
    def __init__(self, node_id: int, strategy, shadow: Node, signer: Signer, view):
        self.id = node_id
        self.strategy = strategy
        self.shadow = shadow
        self.signer = signer
        self.view = view
        self.crashed = False
        self.equivocated: list = []  # rounds where variants were sent
        self._history: dict = {}  # round -> position held when permitting
        self._spammed: set = set()
        self._used_refs: set = set()
        self.scheduled = tuple((s.time, s) for s in strategy.steps) if isinstance(strategy, Custom) \
            else ()

    @property
    def round(self) -> int:
        return self.shadow.round

    def start(self) -> list:
        if isinstance(self.strategy, Silent):
            return []
        return self._transform(self.shadow.start())

    def handle(self, event) -> list:
        return adversary_step(self, event, self.view)

    # ------------------------------------------------------------------

    def _transform(self, actions: list) -> list:
        s = self.strategy
        out: list = []
        for act in actions:
            if not isinstance(act, Send):
                out.append(act)
                continue
            msg = act.message
            if isinstance(s, CrashAt) and self.shadow.round >= s.round:
                r = message_round(msg)
                if r is None or r >= s.round:
                    continue
            if isinstance(s, EquivocateBlocks) and isinstance(msg, Block):
                out += self._equivocate(act, msg, s.k)
                continue
            if isinstance(msg, Permit):
                self._history[msg.round] = msg.position
                if isinstance(s, EquivocateBlocks) and s.abstain and self.equivocated:
                    continue
                if isinstance(s, StalePermit):
                    act = Send(act.to, self._stale(msg, s.lag))
                if isinstance(s, SpamTimeouts):
                    out += self._spam(msg.round, s.ahead)
            if isinstance(s, WithholdFrom):
                out += self._withhold(act, s.targets)
                continue
            out.append(act)
        if isinstance(s, CrashAt) and self.shadow.round >= s.round:
            self.crashed = True
        return out

    def _equivocate(self, act: Send, block: Block, k: int) -> list:
        if act.to == self.id:
            # the shadow keeps variant 0 as its own result
            return [Send(self.id, self._variants(block, k)[0])]
        if act.to != BROADCAST:
            return [act]
        variants = self._variants(block, k)
        honest = [i for i in range(self.shadow.n) if i in self.view.honest_ids]
        out = []
        for idx, i in enumerate(honest):
            out.append(Send(i, variants[idx % k]))
        for i in range(self.shadow.n):
            if i != self.id and i not in self.view.honest_ids:
                out.append(Send(i, variants[0]))
        self.equivocated.append(block.round)
        return out

    def _variants(self, block: Block, k: int) -> list:
        cache = getattr(self, "_variant_cache", {})
        self._variant_cache = cache
        if block.block_id in cache:
            return cache[block.block_id]
        ref = self._mallory_ref()
        variants = []
        for j in range(k):
            if ref is not None:
                out, mref = ref
                extra = Transaction(frozenset({mref}), (TxOutput(f"mallory-{j}", out.amount),))
            else:
                extra = Transaction(frozenset(), (TxOutput(f"mallory-{j}", 0),), nonce=block.round)
            variants.append(make_block(self.signer, self.id, block.proof, block.transactions + (extra,)))
        cache[block.block_id] = variants
        return variants

    def _mallory_ref(self):
        genesis = self.shadow.dag.genesis
        for tx in genesis.transactions:
            for i, out in enumerate(tx.outputs):
                ref = tx.output_ref(i)
                if out.owner == "mallory" and ref not in self._used_refs:
                    self._used_refs.add(ref)
                    return out, ref
        return None

    def _stale(self, permit: Permit, lag: int) -> Permit:
        older = [r for r in self._history if r <= permit.round - lag]
        pos = self._history[max(older)] if older else frozenset({self.shadow.dag.genesis_id})
        return make_permit(self.signer, self.id, permit.round, pos)

    def _spam(self, round_: int, ahead: int) -> list:
        out = []
        for r in range(round_, round_ + ahead + 1):
            if r not in self._spammed:
                self._spammed.add(r)
                out.append(Send(BROADCAST, make_timeout(self.signer, self.id, r)))
        return out

    def _withhold(self, act: Send, targets: frozenset) -> list:
        if act.to == BROADCAST:
            return [Send(i, act.message) for i in range(self.shadow.n)
                    if i != self.id and i not in targets]
        return [] if act.to in targets else [act]

    def on_script(self, step: ScriptStep) -> list:
        if self.crashed:
            return []
        pos = (frozenset({self.shadow.dag.genesis_id}) if step.position == "genesis"
               else self.shadow.current)
        if step.kind == "timeout":
            msg = make_timeout(self.signer, self.id, step.round)
        elif step.kind == "permit":
            msg = make_permit(self.signer, self.id, step.round, pos)
        else:
            raise ValueError(f"unknown script step {step.kind!r}")
        return [Send(step.to, msg)]


def adversary_step(node: ByzantineNode, event, view) -> list:
    """Byzantine reaction to ``event`` with full knowledge of ``view``."""
    s = node.strategy
    if isinstance(s, Silent) or node.crashed:
        return []
    if isinstance(s, Custom) and s.handler is not None:
        acts = s.handler(node, event, view)
        if acts is not None:
            return acts
    acts = node.shadow.handle(event)
    return node._transform(acts)


__all__ = [
    "Silent", "CrashAt", "EquivocateBlocks", "WithholdFrom", "StalePermit", "SpamTimeouts",
    "ScriptStep", "Custom", "Strategy", "ByzantineNode", "adversary_step", "ArmTimer",
]
