"""The global safety oracle: hand-built violations, run metrics, and a mutation check."""

from types import SimpleNamespace

import pytest

from permitbft.dag import BlockDag
from permitbft.fuzz import random_scenario
from permitbft.oracle import OracleState, independent_pair, iter_bits
from permitbft.simnet import OracleViolation, run

from support import Builder, mint, spend

M = mint("mallory", 50)
X = M.output_ref(0)


def oracle_for(b, honest=(0, 1, 2)):
    sim = SimpleNamespace(n=b.n, f=b.f, global_dag=b.dag, honest_ids=list(honest))
    return OracleState(sim)


def siblings(b, t1=(), t2=()):
    return b.add(b.g, txs=list(t1), round_=0), b.add(b.g, txs=list(t2), round_=1)


def test_iter_bits():
    assert list(iter_bits(0)) == []
    assert list(iter_bits(0b101001)) == [0, 3, 5]


@pytest.mark.parametrize("n,byz,expected", [(4, 1, 2), (4, 0, 3), (7, 2, 3), (7, 1, 4), (7, 0, 5)])
def test_promise_threshold_counts_missing_byzantine_votes(n, byz, expected):
    b = Builder(n=n)
    assert oracle_for(b, honest=range(n - byz)).threshold == expected


def test_quorum_of_honest_permits_promises_position():
    b = Builder()
    b1, _ = siblings(b)
    o = oracle_for(b)
    o.on_honest_permit(0, b.permit(0, 2, b1), 0)
    assert o.promised_positions == []
    o.on_honest_permit(1, b.permit(1, 2, b1), 0)
    assert o.promised_positions == [frozenset({b1})]
    assert o.promised == {b1}


def test_two_permits_in_one_round_break_single_voice():
    b = Builder()
    b1, b2 = siblings(b)
    o = oracle_for(b)
    o.on_honest_permit(0, b.permit(0, 2, b1), 0)
    with pytest.raises(OracleViolation) as exc:
        o.on_honest_permit(0, b.permit(0, 2, b2), 0)
    assert exc.value.kind == "single_voice"


def test_permit_for_unknown_block():
    b = Builder()
    o = oracle_for(b)
    with pytest.raises(OracleViolation) as exc:
        o.on_honest_permit(0, b.permit(0, 0, b"\x07" * 32), 0)
    assert exc.value.kind == "unknown_block"


def test_one_unsafe_permit_per_round_is_counted_not_fatal():
    """An honest node still holding the losing sibling permits it: unsafe,
    but within the per-round budget of ``f``."""
    b = Builder()
    b1, b2 = siblings(b)
    o = oracle_for(b)
    o.on_honest_permit(0, b.permit(0, 2, b1), 0)
    o.on_honest_permit(1, b.permit(1, 2, b1), 0)
    o.on_honest_permit(2, b.permit(2, 2, b2), 0)
    assert o.unsafe_honest_permits == 1
    o.on_honest_permit(2, b.permit(2, 3, b2), 0)
    assert o.unsafe_honest_permits == 2
    assert o.unsafe_issuers == {2: {2}, 3: {2}}


def test_more_than_f_unsafe_permits_in_a_round():
    b = Builder()
    b1, b2 = siblings(b)
    o = oracle_for(b)
    o.on_honest_permit(0, b.permit(0, 2, b1), 0)
    o.on_honest_permit(1, b.permit(1, 2, b1), 0)
    o.on_honest_permit(0, b.permit(0, 3, b2), 0)
    with pytest.raises(OracleViolation) as exc:
        o.on_honest_permit(1, b.permit(1, 3, b2), 0)
    assert exc.value.kind == "safe_permit"
    assert exc.value.witnesses == (0, 1)


def test_committed_block_must_be_promised():
    b = Builder()
    b1, _ = siblings(b)
    b.add(b1)
    o = oracle_for(b)
    with pytest.raises(OracleViolation) as exc:
        o.check()
    assert exc.value.kind == "committed_not_promised"
    assert set(exc.value.witnesses) == {b.g, b1}


def test_fabricated_second_promise_is_caught():
    b = Builder()
    b1, b2 = siblings(b)
    o = oracle_for(b)
    o.promised_positions = [frozenset({b.g}), frozenset({b1}), frozenset({b2})]
    o.promised_mask = b.dag.mask_of({b.g, b1, b2})
    with pytest.raises(OracleViolation) as exc:
        o.check()
    assert exc.value.kind == "independently_promised"
    assert set(exc.value.witnesses) == {b1, b2}


def test_children_on_both_siblings_commit_independently():
    b = Builder()
    b1, b2 = siblings(b)
    b.add(b1)
    b.add(b2)
    o = oracle_for(b)
    o.promised_positions = [frozenset({b.g})]
    o.promised_mask = b.dag.mask_of(b.dag.ids())
    with pytest.raises(OracleViolation) as exc:
        o.check()
    assert exc.value.kind == "independently_committed"


def test_merged_siblings_are_not_independent():
    b = Builder()
    b1, b2 = siblings(b)
    c = b.add(b1, b2)
    assert independent_pair(b.dag, [frozenset({c}), frozenset({b1, b2})]) is None
    assert set(independent_pair(b.dag, [frozenset({b1}), frozenset({b2})])) == {b1, b2}


def test_conflicting_transactions_committed():
    b = Builder(mints=[M])
    t1, t2 = spend([X], ("bob", 50)), spend([X], ("carol", 50))
    b1, b2 = siblings(b, [t1], [t2])
    o = oracle_for(b)
    c1, c2 = b.add(b1), b.add(b2)
    o.on_block(b.dag.blocks[c1], 0)
    assert t1.tx_id in o.committed_txs
    with pytest.raises(OracleViolation) as exc:
        o.on_block(b.dag.blocks[c2], 0)
    assert exc.value.kind == "conflicting_commit"


def test_graph_checks_run_only_after_changes():
    b = Builder()
    o = oracle_for(b)
    o.after_event(0)
    assert o.checks == 0
    o.on_honest_permit(0, b.permit(0, 0, b.g), 0)
    o.on_honest_permit(1, b.permit(1, 0, b.g), 0)
    o.after_event(0)
    o.after_event(1)
    assert o.checks == 1


# ----------------------------------------------------------------------
# whole runs


def test_unsafe_honest_permits_occur_without_violation():
    res = run(random_scenario(3), keep_trace=False)
    assert res.violation is None
    assert res.oracle.unsafe_honest_permits >= 1


def test_lagging_nodes_permit_shallow_positions():
    res = run(random_scenario(18), keep_trace=False)
    assert res.violation is None
    assert res.oracle.shallow_honest_permits >= 1


def test_oracle_catches_a_broken_minimal_position(monkeypatch):
    """Proposing the last permit's position verbatim instead of the minimal
    merge lets honest nodes drop promised blocks."""

    def last_position(self, positions):
        return frozenset(list(positions)[-1])

    monkeypatch.setattr(BlockDag, "minimal_position", last_position)
    caught = [run(random_scenario(s), keep_trace=False).violation for s in range(150)]
    assert sum(v is not None for v in caught) >= 1
