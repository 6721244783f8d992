"""Liveness checks over a finished run.

Round entry times come from the honest nodes' ``round`` log records. For a
round ``i``, ``T_i`` is the first time any honest node is in a round
``>= i``; a node "starts" round ``i`` at the first time its own round is
``>= i`` (fast-forwarding past ``i`` counts as starting it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .core import creator_of
from .simnet import SYNC


class LivenessFailure(AssertionError):
    def __init__(self, window: tuple, detail: str):
        super().__init__(f"rounds {window[0]}..{window[1]}: {detail}")
        self.window = window
        self.detail = detail


def has_honest_triple(n: int, byzantine, start: int, span: int) -> bool:
    """Three consecutive honest creators among rounds ``start .. start+span-1``."""
    byz = set(byzantine)
    run = 0
    for r in range(start, start + span):
        run = 0 if creator_of(r, n) in byz else run + 1
        if run >= 3:
            return True
    return False


def lemma_b5_enumeration(n: int, f: int | None = None) -> tuple[int, int]:
    """(placements checked, placements passing) over all f-subsets and start rounds."""
    f = (n - 1) // 3 if f is None else f
    total = passed = 0
    for byz in combinations(range(n), f):
        total += 1
        if all(has_honest_triple(n, byz, s, n + 2) for s in range(n)):
            passed += 1
    return total, passed


@dataclass
class LivenessReport:
    ok: bool
    precondition: bool
    phase: tuple
    start_round: int
    window: tuple
    first_commit_round: int | None
    rounds_to_commit: int | None
    committed_block: bytes | None
    accepted_by_all: bool
    unification_checked: int = 0
    unification_failures: list = field(default_factory=list)
    creator_checked: int = 0
    creator_failures: list = field(default_factory=list)
    acceptance_checked: int = 0
    acceptance_failures: list = field(default_factory=list)
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "ok": self.ok, "precondition": self.precondition, "phase": list(self.phase),
            "start_round": self.start_round, "window": list(self.window),
            "first_commit_round": self.first_commit_round,
            "rounds_to_commit": self.rounds_to_commit, "accepted_by_all": self.accepted_by_all,
            "unification": [self.unification_checked, len(self.unification_failures)],
            "creator_progress": [self.creator_checked, len(self.creator_failures)],
            "result_acceptance": [self.acceptance_checked, len(self.acceptance_failures)],
            "detail": self.detail,
        }


def first_sync_phase(scenario) -> tuple:
    phases = sorted(scenario.phases, key=lambda p: p.start) or []
    if not phases:
        return 0, scenario.horizon
    for p in phases:
        if p.mode == SYNC:
            return p.start, scenario.horizon if p.end is None else min(p.end, scenario.horizon)
    return scenario.horizon, scenario.horizon


def start_time(entries: list, r: int) -> int | None:
    """First time a node's round is >= r."""
    for rnd, t, _ in entries:
        if rnd >= r:
            return t
    return None


def _entry_via(entries: list, r: int) -> str | None:
    for rnd, _, via in entries:
        if rnd >= r:
            return via
    return None


def _round_at(entries: list, t: int) -> int:
    cur = 0
    for rnd, te, _ in entries:
        if te <= t:
            cur = rnd
    return cur


def liveness_check(result, scenario=None, *, raise_on_failure: bool = False) -> LivenessReport:
    sc = scenario or result.scenario
    n = sc.n
    delta = sc.timers.delta
    honest = result.honest
    entries = result.metrics.round_entries
    p_start, p_end = first_sync_phase(sc)
    precondition = (p_end - p_start) >= (n + 2) * sc.timers.round_timeout
    for part in sc.partitions:
        if part.start < p_end and part.end > p_start:
            precondition = False
    start_round = max(_round_at(entries[u], p_start) for u in honest)
    window = (start_round, start_round + n + 4)

    # first block created in the phase that gains a child
    dag = result.global_dag
    in_phase = {bid for t, _, _, bid in result.metrics.blocks if t >= p_start}
    first = None
    for t, rnd, _creator, bid in result.metrics.blocks:
        parents = sorted(p for p in dag.blocks[bid].position if p in in_phase)
        if t >= p_start and parents:
            first = (rnd, parents[0])
            break
    first_commit_round = first[0] if first else None
    committed = first[1] if first else None
    accepted = committed is not None and all(
        committed in result.nodes[u].dag for u in honest)
    rounds_to_commit = None if first is None else first[0] - start_round + 1

    rep = LivenessReport(ok=True, precondition=precondition, phase=(p_start, p_end),
                         start_round=start_round, window=window,
                         first_commit_round=first_commit_round, rounds_to_commit=rounds_to_commit,
                         committed_block=committed, accepted_by_all=accepted)

    # per-round lemmas over rounds fully inside the phase
    last = max(r for u in honest for r, _, _ in entries[u])
    created = {(rnd, c) for _, rnd, c, _ in result.metrics.blocks}
    created |= {(rnd, c) for _, rnd, c in result.metrics.proposals}
    honest_set = set(honest)

    def T(i):
        times = [start_time(entries[u], i) for u in honest]
        times = [t for t in times if t is not None]
        return min(times) if times else None

    def unified(i):
        ti = T(i)
        starts = [start_time(entries[u], i) for u in honest]
        return ti is not None and all(s is not None and s <= ti + delta for s in starts)

    for i in range(last):
        ti, tn = T(i), T(i + 1)
        if ti is None or tn is None or ti < p_start or tn + delta > p_end:
            continue
        c = creator_of(i, n)
        if c not in honest_set:
            continue
        rep.unification_checked += 1
        if not unified(i + 1):
            rep.unification_failures.append(i + 1)
        # an honest creator of a unified round makes a block or a proposal
        c_entered = any(r == i for r, _, _ in entries[c])
        if unified(i) and c_entered and ti + sc.timers.creator_timeout + delta <= p_end:
            rep.creator_checked += 1
            if (i, c) not in created:
                rep.creator_failures.append(i)
            else:
                rep.acceptance_checked += 1
                vias = [_entry_via(entries[u], i + 1) for u in honest]
                if any(v not in ("block", "proposal") for v in vias):
                    rep.acceptance_failures.append(i)

    problems = []
    if first is None or first_commit_round > window[1]:
        problems.append("no committed block inside the window")
    elif not accepted:
        problems.append("committed block missing at some honest node")
    if rep.unification_failures:
        problems.append(f"rounds not unified: {rep.unification_failures[:5]}")
    if rep.creator_failures:
        problems.append(f"honest creator idle in unified rounds {rep.creator_failures[:5]}")
    if rep.acceptance_failures:
        problems.append(f"result not accepted before next round: {rep.acceptance_failures[:5]}")
    rep.ok = not problems
    rep.detail = "; ".join(problems)
    if raise_on_failure and not rep.ok:
        raise LivenessFailure(window, rep.detail)
    return rep
