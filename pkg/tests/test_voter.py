from dataclasses import replace

import pytest

from rdv.core import Block, TxKind, make_transaction, make_vote, verify_block
from rdv import ledger as L
from rdv.ledger import Status
from rdv.voter import (
    Abstain, Phase, Rejection, RoundState, cast_vote, collect_votes, finalize_round,
    reinstate, roster_for, verify_tx,
)


@pytest.fixture
def setup(world, params, keys):
    g, coins = world
    state = L.genesis_state(g, params)
    tx = make_transaction(keys["a"], keys["d"].node_id, coins["a"][5:6], 10)
    return g, coins, state, tx


def new_round(g, tx, keys, params, names="abc", start=20):
    return RoundState(tx, g.block_hash, 1, start, [keys[n].node_id for n in names], params)


def test_cast_vote_valid_and_invalid(setup, keys, params):
    g, coins, state, tx = setup
    rec = state.voters[keys["b"].node_id]
    v = cast_vote(rec, tx, state, [tx], g.block_hash, 20, keys["b"], params, broadcast_at=10)
    assert v.value == 1 and v.verifies()
    steal = make_transaction(keys["a"], keys["d"].node_id, coins["b"][6:7], 10)
    v0 = cast_vote(rec, steal, state, [steal], g.block_hash, 20, keys["b"], params, 10)
    assert v0.value == 0


def test_cast_vote_abstain_reasons(setup, keys, params):
    g, coins, state, tx = setup
    rec = state.voters[keys["b"].node_id]
    late = replace(rec, registered_at=10)
    assert cast_vote(late, tx, state, [], g.block_hash, 20, keys["b"], params) == \
        Abstain.BEFORE_REGISTRATION
    susp = replace(rec, suspended_until=25)
    assert cast_vote(susp, tx, state, [], g.block_hash, 20, keys["b"], params) == Abstain.NOT_ACTIVE
    twin = make_transaction(keys["a"], keys["c"].node_id, coins["a"][5:6], 11)
    assert cast_vote(rec, tx, state, [tx, twin], g.block_hash, 20, keys["b"], params) == \
        Abstain.DOUBLE_SPENT


def test_verify_tx_timestamp_window(setup, keys, params):
    g, coins, state, tx = setup
    assert verify_tx(tx, state, params, broadcast_at=10 + params.clock.m) is None
    assert verify_tx(tx, state, params, broadcast_at=11 + params.clock.m) == "implausible timestamp"


def test_reinstate_boundary(setup, keys):
    _, _, state, _ = setup
    rec = replace(state.voters[keys["a"].node_id], suspended_until=50)
    assert rec.status_at(49) == Status.SUSPENDED
    assert rec.status_at(50) == Status.ACTIVE
    assert reinstate(rec, 49).suspended_until == 50
    assert reinstate(rec, 50).suspended_until is None


def test_roster_excludes_late_registrants(setup, keys):
    _, _, state, tx = setup
    state = L.suspend(state, keys["c"].node_id, 100)
    assert roster_for(tx, state, 20) == sorted([keys["a"].node_id, keys["b"].node_id])
    assert len(roster_for(tx, state, 100)) == 3


def test_unanimous_round_builds_valid_block(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params)
    for n in "abc":
        assert r.add_vote(make_vote(keys[n], tx.id, g.block_hash, 1)) == "ok"
    assert r.close_collection(22) and r.phase == Phase.SIGNING_ROSTER
    for n in "abc":
        assert r.add_rbox_signature(keys[n].node_id, r.sign_roster(keys[n]))
    assert r.phase == Phase.TALLYING
    block, out = finalize_round(r)
    assert isinstance(block, Block) and verify_block(block, g) is None
    assert out.accepted and not out.penalized and len(out.rewarded) == 3


def test_vote_rejections(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params)
    assert r.add_vote(make_vote(keys["d"], tx.id, g.block_hash, 1)) == "not-in-roster"
    assert r.add_vote(make_vote(keys["a"], b"x" * 32, g.block_hash, 1)) == "wrong-tx"
    assert r.add_vote(make_vote(keys["a"], tx.id, b"x" * 32, 1)) == "wrong-prev-hash"
    bad = replace(make_vote(keys["a"], tx.id, g.block_hash, 1), value=0)
    assert r.add_vote(bad) == "bad-signature"
    v = make_vote(keys["a"], tx.id, g.block_hash, 1)
    assert r.add_vote(v) == "ok"
    assert r.add_vote(v) == "duplicate"
    assert r.add_vote(make_vote(keys["a"], tx.id, g.block_hash, 0)) == "equivocation"
    assert keys["a"].node_id in r.cheaters


def test_expire_exactly_at_deadline(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params, start=20)
    for n in "ab":
        r.add_vote(make_vote(keys[n], tx.id, g.block_hash, 1))
    assert r.expire(20 + params.delta - 1) == []
    assert r.expire(20 + params.delta) == [keys["c"].node_id]
    assert r.close_collection(30)
    assert r.final_voters() == tuple(sorted([keys["a"].node_id, keys["b"].node_id]))


def test_tie_is_rejection(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params, names="ab")
    r.add_vote(make_vote(keys["a"], tx.id, g.block_hash, 1))
    r.add_vote(make_vote(keys["b"], tx.id, g.block_hash, 0))
    r.close_collection(21)
    for n in "ab":
        r.add_rbox_signature(keys[n].node_id, r.sign_roster(keys[n]))
    res, out = finalize_round(r)
    assert isinstance(res, Rejection) and (res.ones, res.zeros) == (1, 1)
    assert out.tie and out.penalized == (keys["a"].node_id,)


def test_rbox_signature_must_match_frozen_roster(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params, names="ab")
    for n in "ab":
        r.add_vote(make_vote(keys[n], tx.id, g.block_hash, 1))
    r.close_collection(21)
    other = RoundState(tx, g.block_hash, 1, 20, [keys[n].node_id for n in "abc"], params)
    assert not r.add_rbox_signature(keys["a"].node_id, other.sign_roster(keys["a"]))
    assert not r.add_rbox_signature(keys["c"].node_id, r.sign_roster(keys["c"]))


def test_collect_votes_stream(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params, start=0)
    stream = [(1, make_vote(keys["a"], tx.id, g.block_hash, 1)),
              (2, ("leave", keys["b"].node_id)),
              (50, make_vote(keys["c"], tx.id, g.block_hash, 1))]
    collect_votes(r, stream)
    assert r.phase == Phase.SIGNING_ROSTER
    assert r.left == [keys["b"].node_id]
    assert r.not_participated == [keys["c"].node_id]
    assert r.completed_at == params.delta


def test_empty_round_after_everyone_silent(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params, start=0)
    collect_votes(r, [])
    assert r.empty and len(r.not_participated) == 3


def test_phase_cannot_regress(setup, keys, params):
    g, _, state, tx = setup
    r = new_round(g, tx, keys, params)
    with pytest.raises(RuntimeError):
        finalize_round(r)
