"""Deterministic discrete-event network simulator.

Time is an integer tick count (default Δ = 1000 ticks). Events are ordered
by ``(time, rank, seq)``: transaction injections, then deliveries, then
timer expiries at equal timestamps, and ``seq`` is a global enqueue counter.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import make_genesis
from .crypto import SimScheme, Signer
from .dag import BlockDag, InsertStatus
from .ledger import committed_by_child
from .messages import Block, Permit, Proposal, kind_of, message_round, short
from .node import (
    BROADCAST,
    ArmTimer,
    CommitNotice,
    Deliver,
    InjectTx,
    Log,
    Node,
    Send,
    TimerConfig,
    TimerFired,
)

SYNC = "sync"
ASYNC = "async"

RANK_INJECT, RANK_DELIVER, RANK_TIMER, RANK_SCRIPT = 0, 1, 2, 3


@dataclass(frozen=True)
class SynchronyPhase:
    start: int
    end: int | None  # None: lasts until the horizon
    mode: str = SYNC

    def contains(self, t: int) -> bool:
        return self.start <= t and (self.end is None or t < self.end)


@dataclass(frozen=True)
class Partition:
    """Messages between different groups sent in [start, end) arrive after ``end``."""

    start: int
    end: int
    groups: tuple  # tuple[frozenset[NodeId], ...]

    def group_of(self, node: int) -> int:
        for i, g in enumerate(self.groups):
            if node in g:
                return i
        return -1

    def separates(self, a: int, b: int, t: int) -> bool:
        return self.start <= t < self.end and self.group_of(a) != self.group_of(b)


@dataclass(frozen=True)
class TxInjection:
    time: int
    target: int
    tx: object


class OracleViolation(Exception):
    def __init__(self, kind: str, detail: str, witnesses: tuple = ()):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail
        self.witnesses = witnesses


class DelayModel:
    """Delivery delays under the synchrony schedule and partition map.

    Each directed edge has its own seeded stream, so adding traffic on one
    edge never perturbs delays on another.
    """

    def __init__(self, delta: int, phases=(), partitions=(), seed: int = 0,
                 mode: str = "uniform", horizon: int | None = None):
        if mode not in ("uniform", "max"):
            raise ValueError(f"unknown delay mode {mode!r}")
        self.delta = delta
        self.phases = tuple(sorted(phases, key=lambda p: p.start))
        self.partitions = tuple(partitions)
        self.seed = seed
        self.mode = mode
        self.horizon = horizon
        self._rngs: dict = {}

    def _rng(self, frm: int, to: int) -> np.random.Generator:
        key = (frm, to)
        if key not in self._rngs:
            self._rngs[key] = np.random.default_rng([self.seed, frm, to])
        return self._rngs[key]

    def phase_at(self, t: int) -> SynchronyPhase | None:
        for p in self.phases:
            if p.contains(t):
                return p
        return None

    def _sync_sample(self, rng) -> int:
        if self.mode == "max":
            return self.delta
        return int(rng.integers(1, self.delta + 1))

    def deliver_at(self, frm: int, to: int, send: int) -> int:
        rng = self._rng(frm, to)
        phase = self.phase_at(send)
        if phase is None or phase.mode == SYNC:
            t = send + self._sync_sample(rng)
        else:
            end = phase.end if phase.end is not None else self.horizon
            if end is None:
                end = send + 10 * self.delta
            hold = max(end - send, 0) + self.delta
            t = send + int(rng.integers(1, hold + 1))
        for part in self.partitions:
            if part.separates(frm, to, send):
                t = max(t, part.end + self._sync_sample(rng))
        return t


@dataclass
class Metrics:
    msg_counts: dict = field(default_factory=dict)  # round -> kind -> count
    round_entries: dict = field(default_factory=dict)  # node -> [(round, time, via)]
    blocks: list = field(default_factory=list)  # (time, round, creator, block_id)
    proposals: list = field(default_factory=list)  # (time, round, creator)
    tx_received: dict = field(default_factory=dict)  # tx_id -> (time, node)
    tx_committed: dict = field(default_factory=dict)  # tx_id -> time
    block_committed: dict = field(default_factory=dict)  # block_id -> (time, child round)
    node_commits: dict = field(default_factory=dict)  # node -> {tx_id: time}
    violations: list = field(default_factory=list)
    dropped: int = 0
    end_time: int = 0

    def count(self, round_: int, kind: str) -> None:
        per = self.msg_counts.setdefault(round_, {})
        per[kind] = per.get(kind, 0) + 1

    def latencies(self) -> dict:
        out = {}
        for tx_id, (t0, _) in self.tx_received.items():
            if tx_id in self.tx_committed:
                out[tx_id] = self.tx_committed[tx_id] - t0
        return out

    def round_totals(self) -> dict:
        return {r: sum(k.values()) for r, k in sorted(self.msg_counts.items())}


class Trace:
    """Newline-delimited event log with a running digest."""

    def __init__(self, header: str, keep: bool = True):
        self._hash = hashlib.sha256()
        self.keep = keep
        self.lines: list[str] = []
        self._tail: list[str] = []
        self._emit(header)

    def _emit(self, line: str) -> None:
        self._hash.update(line.encode() + b"\n")
        if self.keep:
            self.lines.append(line)
        self._tail.append(line)
        if len(self._tail) > 200:
            del self._tail[:100]

    def record(self, t: int, seq: int, actor: str, kind: str, payload: str, detail: str = "") -> None:
        self._emit(f"{t} {seq} {actor} {kind} {payload} {detail}".rstrip())

    def tail(self, k: int = 50) -> list[str]:
        return self._tail[-k:]

    @property
    def digest(self) -> str:
        return self._hash.hexdigest()

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def payload_digest(msg) -> str:
    enc = getattr(msg, "encoded", None)
    return short(hashlib.sha256(enc).digest()) if enc is not None else "-"


@dataclass
class RunResult:
    trace: Trace
    metrics: Metrics
    nodes: dict
    global_dag: BlockDag
    violation: OracleViolation | None
    scenario: object
    oracle: object = None

    @property
    def trace_digest(self) -> str:
        return self.trace.digest

    @property
    def honest(self) -> list:
        return [i for i, nd in sorted(self.nodes.items()) if isinstance(nd, Node)]


class Simulator:
    """Owns the clock, the nodes, the global dag and the oracle hook."""

    def __init__(self, scenario, *, oracle_factory: Callable | None = None, keep_trace: bool = True,
                 scenario_digest: str = "-"):
        from .adversary import ByzantineNode  # adversaries build on the simulator types

        self.sc = scenario
        n, f = scenario.n, scenario.f
        self.n, self.f = n, f
        self.scheme = SimScheme(n, scenario.seed)
        self.genesis = make_genesis(scenario.mints)
        self.timers: TimerConfig = scenario.timers
        self.delays = DelayModel(self.timers.delta, scenario.phases, scenario.partitions,
                                 scenario.seed, scenario.delay_mode, scenario.horizon)
        byz_ids = sorted(scenario.byzantine)
        byz_signer = Signer(self.scheme, byz_ids)
        self.nodes: dict = {}
        for i in range(n):
            if i in scenario.byzantine:
                shadow = Node(i, n, f, self.genesis, byz_signer, self.scheme, self.timers)
                self.nodes[i] = ByzantineNode(i, scenario.byzantine[i], shadow, byz_signer, self)
            else:
                self.nodes[i] = Node(i, n, f, self.genesis, Signer(self.scheme, [i]), self.scheme,
                                     self.timers)
        self.honest_ids = [i for i in range(n) if i not in scenario.byzantine]
        self.global_dag = BlockDag(self.genesis, n, f, self.scheme)
        self.metrics = Metrics(round_entries={i: [(0, 0, "genesis")] for i in self.honest_ids},
                               node_commits={i: {} for i in self.honest_ids})
        self.trace = Trace(f"# permitbft-trace v1 scenario={scenario_digest} seed={scenario.seed} "
                           f"n={n} f={f}", keep=keep_trace)
        self.oracle = oracle_factory(self) if oracle_factory else None
        self.now = 0
        self._seq = 0
        self._queue: list = []
        self.in_flight: dict = {}  # seq -> (to, frm, msg) for honest-sent messages

    # ------------------------------------------------------------------
    # scheduling

    def _push(self, t: int, rank: int, payload) -> int:
        self._seq += 1
        heapq.heappush(self._queue, (t, rank, self._seq, payload))
        return self._seq

    def enqueue(self, msg, frm: int, to: int, send_time: int) -> int:
        """Schedule delivery of ``msg`` and return its delivery time."""
        t = send_time if frm == to else self.delays.deliver_at(frm, to, send_time)
        seq = self._push(t, RANK_DELIVER, ("deliver", to, frm, msg))
        if frm in self.honest_ids:
            self.in_flight[seq] = (to, frm, msg)
        return t

    # ------------------------------------------------------------------

    def _apply(self, actor: int, actions: list, seq: int) -> None:
        node = self.nodes[actor]
        honest = isinstance(node, Node)
        tr, now = self.trace, self.now
        for act in actions:
            if isinstance(act, Send):
                msg = act.message
                kind = kind_of(msg)
                targets = [j for j in range(self.n) if j != actor] if act.to == BROADCAST else [act.to]
                if isinstance(msg, Block):
                    self._observe_block(msg, actor)
                elif isinstance(msg, Proposal) and act.to != actor:
                    self._observe_proposal(msg, actor, act.to == BROADCAST)
                if honest and isinstance(msg, Permit):
                    self._observe_permit(actor, msg)
                for to in targets:
                    if to != actor:
                        r = message_round(msg)
                        self.metrics.count(r if r is not None else node_round(node), kind)
                    self.enqueue(msg, actor, to, now)
                tr.record(now, seq, f"n{actor}", f"send:{kind}", payload_digest(msg),
                          "to=*" if act.to == BROADCAST else f"to={act.to}")
            elif isinstance(act, ArmTimer):
                self._push(now + act.duration, RANK_TIMER,
                           ("timer", actor, TimerFired(act.kind, act.round)))
            elif isinstance(act, CommitNotice):
                if honest:
                    commits = self.metrics.node_commits[actor]
                    for t in act.tx_ids:
                        commits.setdefault(t, now)
                tr.record(now, seq, f"n{actor}", "commit", "-",
                          ",".join(short(t) for t in act.tx_ids))
            elif isinstance(act, Log):
                if act.kind == "round" and honest:
                    r, _, via = act.detail.partition(" via ")
                    self.metrics.round_entries[actor].append((int(r), now, via))
                if act.kind.startswith("drop"):
                    self.metrics.dropped += 1
                tr.record(now, seq, f"n{actor}", act.kind, "-", act.detail)

    def _observe_block(self, block: Block, creator: int) -> None:
        res = self.global_dag.insert_block(block)
        if res.status is not InsertStatus.INSERTED:
            return
        self.metrics.blocks.append((self.now, block.round, block.creator, block.block_id))
        self._global_inserted(block)
        stack = [block.block_id]
        while stack:
            for blk in self.global_dag.ready_waiters(stack.pop()):
                if self.global_dag.insert_block(blk).status is InsertStatus.INSERTED:
                    self._global_inserted(blk)
                    stack.append(blk.block_id)

    def _global_inserted(self, block: Block) -> None:
        for parent in block.position:
            self.metrics.block_committed.setdefault(parent, (self.now, block.round))
        for tx_id in sorted(committed_by_child(self.global_dag, block.block_id)):
            self.metrics.tx_committed.setdefault(tx_id, self.now)
        if self.oracle is not None:
            self.oracle.on_block(block, self.now)

    def _observe_proposal(self, proposal: Proposal, creator: int, broadcast: bool) -> None:
        if broadcast:
            self.metrics.proposals.append((self.now, proposal.round, creator))

    def _observe_permit(self, issuer: int, permit: Permit) -> None:
        if self.oracle is not None:
            self.oracle.on_honest_permit(issuer, permit, self.now)

    # ------------------------------------------------------------------

    def run(self, until: Callable | None = None) -> RunResult:
        sc = self.sc
        for inj in sorted(sc.tx_schedule, key=lambda x: (x.time, x.target)):
            self._push(inj.time, RANK_INJECT, ("inject", inj.target, inj.tx))
        violation = None
        try:
            for i in range(self.n):
                node = self.nodes[i]
                self._apply(i, node.start(), 0)
                extra = getattr(node, "scheduled", ())
                for t, tag in extra:
                    self._push(t, RANK_SCRIPT, ("script", i, tag))
            while self._queue:
                t, _rank, seq, payload = heapq.heappop(self._queue)
                if t > sc.horizon:
                    break
                self.now = t
                self._step(seq, payload)
                if until is not None and until(self):
                    break
        except OracleViolation as exc:
            violation = exc
            self.metrics.violations.append((exc.kind, exc.detail))
            self.trace.record(self.now, self._seq, "oracle", "violation", "-", str(exc))
            for line in self.trace.tail(50):
                self.trace.record(self.now, self._seq, "oracle", "context", "-", line)
        self.metrics.end_time = self.now
        if violation is None:
            self.trace.record(self.now, self._seq, "sim", "end", "-", f"blocks={len(self.global_dag) - 1}")
        return RunResult(self.trace, self.metrics, self.nodes, self.global_dag, violation, sc,
                         self.oracle)

    def _step(self, seq: int, payload) -> None:
        tag = payload[0]
        if tag == "deliver":
            _, to, frm, msg = payload
            self.in_flight.pop(seq, None)
            self.trace.record(self.now, seq, f"n{to}", f"recv:{kind_of(msg)}", payload_digest(msg),
                              f"from={frm}")
            self._apply(to, self.nodes[to].handle(Deliver(msg, frm)), seq)
        elif tag == "timer":
            _, node, ev = payload
            self.trace.record(self.now, seq, f"n{node}", f"timer:{ev.kind.value}", "-",
                              f"round={ev.round}")
            self._apply(node, self.nodes[node].handle(ev), seq)
        elif tag == "inject":
            _, node, tx = payload
            if node in self.honest_ids:
                self.metrics.tx_received.setdefault(tx.tx_id, (self.now, node))
            self.trace.record(self.now, seq, f"n{node}", "inject", payload_digest(tx))
            self._apply(node, self.nodes[node].handle(InjectTx(tx)), seq)
        elif tag == "script":
            _, node, step = payload
            self._apply(node, self.nodes[node].on_script(step), seq)
        if self.oracle is not None:
            self.oracle.after_event(self.now)


def node_round(node) -> int:
    return node.round


def run(scenario, *, oracle: bool = True, keep_trace: bool = True, scenario_digest: str = "-",
        until: Callable | None = None) -> RunResult:
    """Run ``scenario`` to its horizon (or until ``until(sim)`` is true)."""
    factory = None
    if oracle:
        from .oracle import OracleState

        factory = OracleState
    sim = Simulator(scenario, oracle_factory=factory, keep_trace=keep_trace,
                    scenario_digest=scenario_digest)
    return sim.run(until)
