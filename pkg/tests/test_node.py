"""The per-node state machine, driven one event at a time."""

import pytest

from permitbft.core import (
    make_block,
    make_genesis,
    make_permit,
    make_proposal,
    make_timeout,
    validate_proof,
)
from permitbft.crypto import Signer, SimScheme
from permitbft.messages import (
    Block,
    FetchRequest,
    FetchResponse,
    Permit,
    Proof,
    Proposal,
    Signature,
    TimeoutBundle,
    TimeoutMsg,
)
from permitbft.node import (
    BROADCAST,
    ArmTimer,
    CommitNotice,
    Deliver,
    InjectTx,
    Log,
    Node,
    Phase,
    Send,
    TimerConfig,
    TimerFired,
    TimerKind,
    check_bundle,
)

from support import mint, spend

N, F = 4, 1
M = mint("mallory", 50)
A = mint("alice", 100, nonce=1)


class Harness:
    """One node under test plus a signer for everyone else."""

    def __init__(self, node_id=1, mints=(M, A)):
        self.scheme = SimScheme(N)
        self.all = Signer(self.scheme, range(N))
        self.genesis = make_genesis(mints)
        self.g = self.genesis.block_id
        self.node = Node(node_id, N, F, self.genesis, Signer(self.scheme, [node_id]), self.scheme,
                         TimerConfig())

    def permit(self, issuer, r, *pos):
        return make_permit(self.all, issuer, r, frozenset(pos or [self.g]))

    def block(self, r, *pos, txs=(), issuers=(0, 2, 3)):
        pos = frozenset(pos or [self.g])
        proof = Proof(frozenset(make_permit(self.all, i, r, pos) for i in issuers))
        return make_block(self.all, r % N, proof, tuple(txs))

    def deliver(self, msg, sender):
        return self.node.handle(Deliver(msg, sender))


def sends(acts, kind=None):
    out = [a for a in acts if isinstance(a, Send)]
    return [a for a in out if kind is None or isinstance(a.message, kind)]


def logs(acts, kind):
    return [a for a in acts if isinstance(a, Log) and a.kind == kind]


# ----------------------------------------------------------------------
# rounds


def test_start_round_sends_permit_to_creator():
    h = Harness(node_id=3)
    h.node.round = 2
    acts = h.node.start_round("test")
    (s,) = sends(acts, Permit)
    assert s.to == 2 and s.message.round == 2 and s.message.position == {h.g}
    assert ArmTimer(TimerKind.ROUND, 2, 5500) in acts
    assert not any(a.kind is TimerKind.CREATOR for a in acts if isinstance(a, ArmTimer))


def test_creator_arms_creator_timer_and_permits_itself():
    h = Harness(node_id=1)
    h.node.round = 1
    acts = h.node.start_round("test")
    assert ArmTimer(TimerKind.CREATOR, 1, 2500) in acts
    (s,) = sends(acts, Permit)
    assert s.to == 1
    assert h.node.phase is Phase.COLLECTING


def test_third_matching_permit_builds_a_block():
    h = Harness(node_id=1)
    h.node.round = 1
    h.node.start_round("test")
    assert not sends(h.deliver(h.permit(1, 1), 1))
    assert not sends(h.deliver(h.permit(0, 1), 0))
    acts = h.deliver(h.permit(3, 1), 3)
    blocks = sends(acts, Block)
    assert [s.to for s in blocks] == [BROADCAST, 1]
    blk = blocks[0].message
    assert validate_proof(blk.proof, N, F, h.scheme) == (1, {h.g})
    assert {p.issuer for p in blk.proof.permits} == {0, 1, 3}


def test_first_permit_per_issuer_wins():
    h = Harness(node_id=1)
    h.node.round = 1
    h.node.start_round("test")
    other = h.block(0)
    h.deliver(other, 0)
    h.node.round = 1
    h.node.phase = Phase.COLLECTING
    first, second = h.permit(0, 1, h.g), h.permit(0, 1, other.block_id)
    h.deliver(first, 0)
    acts = h.deliver(second, 0)
    assert logs(acts, "dropped_permit")
    assert h.node.permits_buffer[1][0] == first


def test_stale_and_badly_signed_permits_are_dropped():
    h = Harness(node_id=1)
    h.node.round = 5
    assert logs(h.deliver(h.permit(0, 1), 0), "dropped_permit")
    forged = Permit(5, frozenset({h.g}), Signature(0, b"\x00" * 32))
    assert logs(h.deliver(forged, 0), "dropped_permit")


def test_future_permits_are_buffered_within_window():
    h = Harness(node_id=1)
    h.node.start()
    h.node.round = 1
    h.deliver(h.permit(0, 5), 0)  # 5 <= 1 + n
    assert 0 in h.node.permits_buffer[5]
    assert logs(h.deliver(h.permit(0, 9), 0), "dropped_permit")


def test_block_acceptance_advances_round():
    h = Harness(node_id=2)
    h.node.start()
    blk = h.block(0)
    acts = h.deliver(blk, 0)
    assert h.node.round == 1 and h.node.current == {blk.block_id}
    (s,) = sends(acts, Permit)
    assert s.to == 1 and s.message.position == {blk.block_id}


def test_fast_forward_on_newer_proposal():
    h = Harness(node_id=2)
    h.node.start()
    h.node.round = 6
    permits = frozenset(h.permit(i, 9) for i in (0, 2, 3))
    prop = make_proposal(h.all, 1, frozenset({h.g}), permits)
    acts = h.deliver(prop, 1)
    assert h.node.round == 10
    (s,) = sends(acts, Permit)
    assert s.message.round == 10


def test_old_result_is_stored_without_regression():
    h = Harness(node_id=2)
    h.node.start()
    h.node.round = 6
    blk = h.block(3)
    h.deliver(blk, 3)
    assert blk.block_id in h.node.dag
    assert h.node.round == 6 and h.node.current == {h.g}


def test_unknown_parent_triggers_fetch_then_acceptance():
    h = Harness(node_id=2)
    h.node.start()
    parent = h.block(0)
    child = h.block(1, parent.block_id)
    acts = h.deliver(child, 1)
    (req,) = sends(acts, FetchRequest)
    assert req.to == 1 and req.message.block_ids == {parent.block_id}
    assert h.node.round == 0
    acts = h.deliver(FetchResponse((parent,)), 1)
    assert h.node.round == 2 and h.node.current == {child.block_id}


def test_fetch_request_is_answered():
    h = Harness(node_id=2)
    blk = h.block(0)
    h.deliver(blk, 0)
    (s,) = sends(h.deliver(FetchRequest(frozenset({blk.block_id, b"\x09" * 32})), 3))
    assert s.message == FetchResponse((blk,))


# ----------------------------------------------------------------------
# creator timeout


def test_creator_timeout_proposes_merged_siblings():
    h = Harness(node_id=1)
    s1, s2 = h.block(0), h.block(0, issuers=(1, 2, 3))
    for b in (s1, s2):
        h.node.dag.insert_block(b)
    h.node.round = 1
    h.node.start_round("test")
    h.deliver(h.permit(0, 1, s1.block_id), 0)
    h.deliver(h.permit(2, 1, s2.block_id), 2)
    h.deliver(h.permit(3, 1, s1.block_id), 3)
    acts = h.node.handle(TimerFired(TimerKind.CREATOR, 1))
    props = sends(acts, Proposal)
    assert props and props[0].to == BROADCAST
    assert props[0].message.position == {s1.block_id, s2.block_id}


def test_creator_timeout_with_two_permits_is_silent():
    h = Harness(node_id=1)
    h.node.round = 1
    h.node.start_round("test")
    h.deliver(h.permit(0, 1), 0)
    acts = h.node.handle(TimerFired(TimerKind.CREATOR, 1))
    assert not sends(acts)
    assert h.node.phase is Phase.AWAITING


def test_creator_timeout_after_block_is_ignored():
    h = Harness(node_id=1)
    h.node.round = 1
    h.node.start_round("test")
    for i in (0, 2, 3):
        h.deliver(h.permit(i, 1), i)
    assert h.node.phase is Phase.AWAITING
    assert h.node.handle(TimerFired(TimerKind.CREATOR, 1)) == []


def test_proposal_deferred_until_permitted_block_arrives():
    h = Harness(node_id=1)
    s1, s2 = h.block(0), h.block(0, issuers=(1, 2, 3))
    h.node.dag.insert_block(s1)
    h.node.round = 1
    h.node.start_round("test")
    h.deliver(h.permit(0, 1, s1.block_id), 0)
    h.deliver(h.permit(2, 1, s2.block_id), 2)
    h.deliver(h.permit(3, 1, s1.block_id), 3)
    acts = h.node.handle(TimerFired(TimerKind.CREATOR, 1))
    assert not sends(acts, Proposal)
    acts = h.deliver(FetchResponse((s2,)), 2)
    (p, _) = sends(acts, Proposal)
    assert p.message.position == {s1.block_id, s2.block_id}


# ----------------------------------------------------------------------
# timeouts


def test_round_timeout_broadcasts_once():
    h = Harness(node_id=2)
    h.node.start()
    acts = h.node.handle(TimerFired(TimerKind.ROUND, 0))
    (s,) = sends(acts, TimeoutMsg)
    assert s.to == BROADCAST and s.message.round == 0
    assert h.node.handle(TimerFired(TimerKind.ROUND, 0)) == []


def test_stale_round_timer_is_ignored():
    h = Harness(node_id=2)
    h.node.start()
    h.node.round = 5
    assert h.node.handle(TimerFired(TimerKind.ROUND, 3)) == []


def test_third_timeout_moves_on_with_unchanged_current():
    h = Harness(node_id=2)
    h.node.start()
    h.node.handle(TimerFired(TimerKind.ROUND, 0))
    h.deliver(make_timeout(h.all, 0, 0), 0)
    acts = h.deliver(make_timeout(h.all, 3, 0), 3)
    (b,) = sends(acts, TimeoutBundle)
    assert b.to == BROADCAST and check_bundle(b.message, F, h.scheme)
    assert h.node.round == 1 and h.node.current == {h.g}


def test_old_round_timeout_gets_last_result():
    h = Harness(node_id=2)
    h.node.start()
    blk = h.block(0)
    h.deliver(blk, 0)
    h.node.round = 6
    acts = h.deliver(make_timeout(h.all, 3, 2), 3)
    assert sends(acts) == [Send(3, blk)]
    assert h.deliver(make_timeout(h.all, 3, 2), 3) == []  # answered once


def test_bundles_jump_to_the_highest_round():
    h = Harness(node_id=2)
    h.node.start()
    for r in (5, 7):
        for i in (0, 1, 3):
            h.node.timeouts.setdefault(r, {})[i] = make_timeout(h.all, i, r)
    acts = h.node._check_timeouts()
    assert sends(acts, TimeoutBundle)[0].message.round == 7
    assert h.node.round == 8


def test_invalid_bundle_is_dropped():
    h = Harness(node_id=2)
    h.node.start()
    bundle = TimeoutBundle(0, frozenset(make_timeout(h.all, i, 0) for i in (0, 1)))
    assert logs(h.deliver(bundle, 0), "drop_bundle")
    assert h.node.round == 0


# ----------------------------------------------------------------------
# transactions


def test_creator_selects_non_conflicting_transactions():
    h = Harness(node_id=1)
    t1 = spend([M.output_ref(0)], ("bob", 50))
    t2 = spend([M.output_ref(0)], ("carol", 50))
    t3 = spend([A.output_ref(0)], ("dave", 90))  # does not balance
    h.node.handle(InjectTx(t1))
    assert logs(h.node.handle(InjectTx(t2)), "drop_tx")
    h.node.handle(InjectTx(t3))
    assert h.node.select_transactions(frozenset({h.g})) == (t1,)


def test_chained_spend_in_one_block():
    h = Harness(node_id=1)
    t1 = spend([A.output_ref(0)], ("bob", 100))
    t2 = spend([t1.output_ref(0)], ("carol", 100))
    h.node.handle(InjectTx(t1))
    h.node.handle(InjectTx(t2))
    assert h.node.select_transactions(frozenset({h.g})) == (t1, t2)


def test_commit_notice_when_child_arrives():
    h = Harness(node_id=2)
    t1 = spend([A.output_ref(0)], ("bob", 100))
    b0 = h.block(0, txs=[t1])
    h.deliver(b0, 0)
    acts = h.deliver(h.block(1, b0.block_id), 1)
    notices = [a for a in acts if isinstance(a, CommitNotice)]
    assert notices == [CommitNotice((t1.tx_id,))]


def test_unknown_event_type():
    h = Harness()
    with pytest.raises(TypeError):
        h.node.handle(object())


def test_timer_bounds():
    assert TimerConfig().satisfies_timing_bounds()
    assert not TimerConfig(creator_timeout=3000).satisfies_timing_bounds()
    assert not TimerConfig(round_timeout=5000).satisfies_timing_bounds()
