import pytest
from hypothesis import given, strategies as st

from rdv.core import Allocation, KeyPair, TxKind, make_genesis, make_mint, make_transaction, countersign
from rdv import ledger as L
from rdv.ledger import LedgerError, RoundOutcome, Status, outcome_from_votes
from rdv.params import ProtocolParams
from oracles import Econ


def ids(keys, names):
    return [keys[n].node_id for n in names]


def test_genesis_locks_deposits(world, params, keys):
    g, _ = world
    s = L.genesis_state(g, params)
    for n in "abc":
        rec = s.voters[keys[n].node_id]
        assert rec.deposit == 4 and rec.status == Status.ACTIVE
        assert L.balance_of(s, keys[n].node_id)["spendable"] == 6
    assert keys["d"].node_id not in s.voters
    assert L.conservation_holds(s)


def test_debt_bootstrap_nets_incoming_coins(keys, params):
    a, b = keys["a"], keys["b"]
    g = make_genesis(make_mint([Allocation(a.node_id, 0, True, True),
                                Allocation(b.node_id, 10, True)]))
    s = L.genesis_state(g, params)
    assert s.voters[a.node_id].deposit == -4
    coins = sorted(s.spendable(b.node_id))
    tx = make_transaction(b, a.node_id, coins[:3], 1)
    s = L.apply_block(s, _block(g, tx), RoundOutcome(tx.id, True), params)
    rec = s.voters[a.node_id]
    assert (len(rec.locked), rec.owed_deposit) == (3, 1)
    assert rec.deposit == 2
    assert L.balance_of(s, a.node_id)["spendable"] == 0
    tx2 = make_transaction(b, a.node_id, coins[3:5], 2)
    s = L.apply_block(s, _block(g, tx2, 2), RoundOutcome(tx2.id, True), params)
    assert s.voters[a.node_id].deposit == 4
    assert L.balance_of(s, a.node_id)["spendable"] == 1
    assert L.conservation_holds(s)


def test_debt_needs_permission(keys, params):
    s = L.LedgerState()
    with pytest.raises(LedgerError):
        L.register(s, keys["a"].node_id, params, 0)
    s2, rec = L.register(s, keys["a"].node_id, params, 0, allow_debt=True)
    assert rec.deposit == -4 and rec.debt


def _block(g, tx, height=1):
    from rdv.core import VoteRBox, seal_block
    return seal_block(height, g.block_hash, tx, (), VoteRBox(tx.id, (), g.block_hash, ()))


def test_penalty_and_demotion(world, params, keys):
    g, _ = world
    s = L.genesis_state(g, params)
    a = keys["a"].node_id
    out = RoundOutcome(b"t" * 32, False, penalized=(a,))
    for k in range(1, 4):
        s = L.apply_rejection(s, out, params)
        assert s.voters[a].penalties == k
        assert s.voters[a].deposit == 4 - k
        assert s.voters[a].status == Status.ACTIVE
    s = L.apply_rejection(s, out, params)
    rec = s.voters[a]
    assert rec.status == Status.LEFT and rec.deposit == 0
    bal = L.balance_of(s, a)
    assert bal["blocked"] == 4 and bal["spendable"] == 6
    assert L.conservation_holds(s)


def test_leave_returns_deposit_minus_penalties(world, params, keys):
    g, _ = world
    s = L.genesis_state(g, params)
    a = keys["a"].node_id
    s = L.apply_rejection(s, RoundOutcome(b"t" * 32, False, penalized=(a,)), params)
    s = L.leave(s, a)
    assert L.balance_of(s, a) == {"spendable": 9, "deposited": 0, "blocked": 1, "ctr": 0}
    with pytest.raises(LedgerError):
        L.leave(s, a)


def test_penalty_debt_persists_after_leave(keys, params):
    a, b = keys["a"], keys["b"]
    g = make_genesis(make_mint([Allocation(a.node_id, 0, True, True),
                                Allocation(b.node_id, 10, True)]))
    s = L.genesis_state(g, params)
    s = L.apply_rejection(s, RoundOutcome(b"t" * 32, False, penalized=(a.node_id,)), params)
    s = L.leave(s, a.node_id)
    coin = sorted(s.spendable(b.node_id))[0]
    tx = make_transaction(b, a.node_id, [coin], 1)
    s = L.apply_block(s, _block(g, tx), RoundOutcome(tx.id, True), params)
    assert L.balance_of(s, a.node_id)["blocked"] == 1
    assert s.voters[a.node_id].owed_penalty == 0


@pytest.mark.parametrize("votes, accepted, tie", [
    ({1: 1, 2: 1, 3: 1}, True, False),
    ({1: 1, 2: 1, 3: 0}, True, False),
    ({1: 1, 2: 0}, False, True),
    ({1: 0, 2: 0, 3: 1}, False, False),
])
def test_outcome_majority_rule(votes, accepted, tie):
    votes = {bytes([k]) * 32: v for k, v in votes.items()}
    out = outcome_from_votes(b"t" * 32, votes)
    win = 1 if accepted else 0
    assert out.accepted == accepted and out.tie == tie
    assert set(out.penalized) == {n for n, v in votes.items() if v != win}
    assert set(out.rewarded) == {n for n, v in votes.items() if v == win}


def test_tie_penalizes_one_voters():
    a, b = b"a" * 32, b"b" * 32
    out = outcome_from_votes(b"t" * 32, {a: 1, b: 0})
    assert out.penalized == (a,) and out.rewarded == (b,)


def test_cheaters_penalized_not_rewarded():
    a, b, c = b"a" * 32, b"b" * 32, b"c" * 32
    out = outcome_from_votes(b"t" * 32, {a: 1, b: 1}, cheaters=[c])
    assert out.accepted and c in out.penalized and c not in out.rewarded


def test_ctr_exchange(world, params, keys):
    g, _ = world
    s = L.genesis_state(g, params)
    a, d = keys["a"].node_id, keys["d"].node_id
    s.ctr[a] = 3
    coin = sorted(s.spendable(d))[:2]
    tx = countersign(make_transaction(keys["a"], d, coin, 1, kind=TxKind.CTR_EXCHANGE,
                                      ctr_units=2), keys["d"])
    assert L.tx_error(s, tx, params) is None
    s2 = L.exchange_ctr(s, tx)
    assert s2.ctr_of(a) == 1 and s2.ctr_of(d) == 2
    assert L.balance_of(s2, a)["spendable"] == 8
    s.ctr[a] = 1
    assert L.exchange_error(s, tx) == "insufficient ctr"


def test_tx_error_reasons(world, params, keys):
    g, coins = world
    s = L.genesis_state(g, params)
    steal = make_transaction(keys["a"], keys["b"].node_id, coins["b"][6:7], 1)
    assert L.tx_error(s, steal, params) == "insufficient coins"
    locked = make_transaction(keys["a"], keys["b"].node_id, coins["a"][0:1], 1)
    assert L.tx_error(s, locked, params) == "insufficient coins"
    again = make_transaction(keys["a"], keys["a"].node_id, coins["a"][4:8], 1, kind=TxKind.REGISTER)
    assert L.tx_error(s, again, params) == "already registered"
    short = make_transaction(keys["d"], keys["d"].node_id, coins["d"][:2], 1, kind=TxKind.REGISTER)
    assert L.tx_error(s, short, params) == "wrong deposit size"


def test_snapshot_is_canonical(world, params):
    g, _ = world
    s1 = L.genesis_state(g, params)
    s2 = L.genesis_state(g, params)
    assert s1.snapshot() == s2.snapshot()
    s2.ctr[next(iter(s2.voters))] = 1
    assert s1.snapshot() != s2.snapshot()


# Random outcome sequences folded through the ledger and the count oracle.
@given(st.integers(1, 6), st.integers(1, 3), st.lists(
    st.tuples(st.sampled_from("abc"), st.booleans()), max_size=30))
def test_outcome_fold_matches_oracle(keys, d, p, events):
    p = min(p, d)
    params = ProtocolParams(deposit=d, penalty=p)
    allocs = [Allocation(keys[n].node_id, 8, True, n == "c") for n in "abc"]
    allocs[2] = Allocation(keys["c"].node_id, 0, True, True)
    g = make_genesis(make_mint(allocs))
    s = L.genesis_state(g, params)
    oracle = Econ(d, p)
    oracle.genesis(g.tx.allocations)
    for who, lose in events:
        n = keys[who].node_id
        out = RoundOutcome(b"t" * 32, False, penalized=(n,) if lose else (),
                           rewarded=() if lose else (n,))
        s = L.apply_rejection(s, out, params)
        oracle.outcome(out)
    assert L.conservation_holds(s)
    for n in "abc":
        node = keys[n].node_id
        bal = L.balance_of(s, node)
        assert bal["spendable"] == oracle.spend[node]
        assert bal["blocked"] == oracle.blocked[node]
        assert bal["ctr"] == oracle.ctr[node]
        assert s.voters[node].deposit == oracle.deposit(node)
        assert s.voters[node].penalties == oracle.pens[node]
