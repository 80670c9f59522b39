import pytest
from dataclasses import replace
from hypothesis import given, strategies as st

from rdv.core import (
    Block, Chain, CoinId, CorruptDump, ForkError, Reader, Transaction, TxKind, Vote,
    DecodeError, countersign, decode, digest, dump_chain, eligible_rosters, encode,
    load_chain, make_transaction, make_vote, seal_block, sign, sign_rbox, verify,
    verify_block, verify_chain, verify_genesis, VoteRBox, Writer,
)


def block_on(prev, tx, voters, value=1):
    votes = [make_vote(k, tx.id, prev.block_hash, value) for k in voters]
    ids = sorted(k.node_id for k in voters)
    by_id = {k.node_id: k for k in voters}
    sigs = tuple(sign_rbox(by_id[i], tx.id, ids, prev.block_hash) for i in ids)
    rbox = VoteRBox(tx.id, tuple(ids), prev.block_hash, sigs)
    return seal_block(prev.height + 1, prev.block_hash, tx, votes, rbox)


def test_digest_is_sha256():
    import hashlib
    assert digest(b"abc") == hashlib.sha256(b"abc").digest()


def test_keypair_is_deterministic(keys):
    from rdv.core import KeyPair
    assert KeyPair.from_seed("test:a").node_id == keys["a"].node_id
    assert KeyPair.from_seed("test:b").node_id != keys["a"].node_id


def test_sign_verify(keys):
    sig = sign(keys["a"], b"msg")
    assert len(sig) == 64
    assert verify(keys["a"].node_id, b"msg", sig)
    assert not verify(keys["b"].node_id, b"msg", sig)
    assert not verify(keys["a"].node_id, b"msh", sig)
    assert not verify(keys["a"].node_id, b"msg", sig[:-1])


@given(st.integers(0, 2**64 - 1), st.integers(-2**63, 2**63 - 1), st.binary(max_size=300))
def test_writer_reader_roundtrip(u, i, blob):
    data = Writer().u64(u).i64(i).var(blob).u8(7).getvalue()
    r = Reader(data)
    assert (r.u64(), r.i64(), r.var(), r.u8()) == (u, i, blob, 7)
    r.done()


def test_reader_rejects_truncation():
    data = Writer().var(b"hello").getvalue()
    with pytest.raises(DecodeError):
        Reader(data[:-1]).var()


@given(st.integers(0, 10**9), st.integers(0, 1000), st.lists(st.integers(0, 50), min_size=1, max_size=5, unique=True))
def test_transaction_roundtrip(tsp, ctr, idx):
    from rdv.core import KeyPair
    kp = KeyPair.from_seed("rt")
    coins = [CoinId(digest(b"o"), i) for i in idx]
    tx = make_transaction(kp, digest(b"r"), coins, tsp, ctr)
    back = decode(Transaction, encode(tx))
    assert back == tx
    assert back.compute_id() == tx.id


def test_tx_id_covers_every_field(keys):
    tx = make_transaction(keys["a"], keys["b"].node_id, [CoinId(digest(b"x"), 1)], 5)
    for change in ({"tsp": 6}, {"ctr_snapshot": 1}, {"receiver": keys["c"].node_id},
                   {"coins": ()}, {"kind": TxKind.LEAVE}):
        assert replace(tx, **change).compute_id() != tx.id


def test_countersigned_exchange(keys):
    tx = make_transaction(keys["a"], keys["b"].node_id, [CoinId(digest(b"x"), 1)], 5,
                          kind=TxKind.CTR_EXCHANGE, ctr_units=2)
    from rdv.core import tx_structure_error
    assert tx_structure_error(tx) == "tx-countersignature"
    signed = countersign(tx, keys["b"])
    assert tx_structure_error(signed) is None
    assert signed.spender == keys["b"].node_id
    assert decode(Transaction, encode(signed)) == signed


def test_vote_roundtrip_and_signature(keys):
    v = make_vote(keys["a"], digest(b"t"), digest(b"p"), 1)
    assert v.verifies()
    assert decode(Vote, encode(v)) == v
    assert not replace(v, value=0).verifies()


def test_genesis_verifies(world):
    g, _ = world
    assert verify_genesis(g) is None
    assert verify_genesis(g, g.block_hash) is None
    assert verify_genesis(g, digest(b"other")).check == "genesis"


def test_block_roundtrip_and_verify(world, keys):
    g, coins = world
    tx = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    b = block_on(g, tx, [keys["a"], keys["b"], keys["c"]])
    assert decode(Block, encode(b)) == b
    assert verify_block(b, g) is None
    assert verify_block(b, g, [keys[n].node_id for n in "abc"]) is None
    assert verify_block(b, g, [keys[n].node_id for n in "ab"]).check == "roster"


def test_verify_block_rejects_minority(world, keys):
    g, coins = world
    tx = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    b = block_on(g, tx, [keys["a"], keys["b"]], value=0)
    assert verify_block(b, g).check == "majority"


@pytest.mark.parametrize("mutate, check", [
    (lambda b: replace(b, height=5), "height"),
    (lambda b: replace(b, prev_hash=digest(b"x")), "prev-hash"),
    (lambda b: replace(b, block_hash=digest(b"x")), "block-hash"),
])
def test_verify_block_header_checks(world, keys, mutate, check):
    g, coins = world
    tx = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    b = block_on(g, tx, [keys["a"], keys["b"], keys["c"]])
    assert verify_block(mutate(b), g).check == check


def test_resealed_vote_change_caught_by_signature(world, keys):
    g, coins = world
    tx = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    b = block_on(g, tx, [keys["a"], keys["b"], keys["c"]])
    votes = (replace(b.votes[0], value=0),) + b.votes[1:]
    forged = replace(b, votes=votes)
    forged = replace(forged, block_hash=forged.compute_hash())
    assert verify_block(forged, g).check == "vote signature"


def test_chain_rejects_second_block_at_height(world, keys):
    g, coins = world
    c = Chain(g)
    t1 = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    t2 = make_transaction(keys["a"], keys["c"].node_id, coins["a"][6:7], 1)
    c.append(block_on(g, t1, [keys["a"], keys["b"], keys["c"]]))
    with pytest.raises(ForkError):
        c.append(block_on(g, t2, [keys["a"], keys["b"], keys["c"]]))
    assert len(c) == 2


def test_dump_roundtrip_and_corruption(world, keys):
    g, coins = world
    c = Chain(g)
    tx = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 1)
    c.append(block_on(g, tx, [keys["a"], keys["b"], keys["c"]]))
    data = dump_chain(c)
    back = load_chain(data)
    assert back.hashes() == c.hashes()
    assert verify_chain(back, eligible_rosters(back), subset=True) is None
    with pytest.raises(CorruptDump):
        load_chain(data[:-3])
    with pytest.raises(CorruptDump):
        load_chain(b"garbage")


def test_eligible_rosters_track_register_and_leave(world, keys):
    g, coins = world
    c = Chain(g)
    voters = [keys["a"], keys["b"], keys["c"]]
    reg = make_transaction(keys["d"], keys["d"].node_id, coins["d"][:4], 2, kind=TxKind.REGISTER)
    c.append(block_on(c.tip, reg, voters))
    bye = make_transaction(keys["c"], keys["c"].node_id, [], 3, kind=TxKind.LEAVE)
    c.append(block_on(c.tip, bye, voters))
    t = make_transaction(keys["a"], keys["b"].node_id, coins["a"][5:6], 4)
    c.append(block_on(c.tip, t, [keys["a"], keys["b"], keys["d"]]))
    r = eligible_rosters(c)
    abc = sorted(k.node_id for k in voters)
    assert r[1] == abc
    # d registered at tsp 2, before the leave tx was sent
    assert r[2] == sorted(abc + [keys["d"].node_id])
    assert r[3] == sorted([keys["a"].node_id, keys["b"].node_id, keys["d"].node_id])
    assert verify_chain(c, r, subset=True) is None
