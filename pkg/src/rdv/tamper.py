"""Random single-field mutations of a chain dump and their detection rate."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .core import (
    Block, CoinId, CorruptDump, TxKind, dump_chain, eligible_rosters, load_chain,
    verify_chain,
)


def _flip(b: bytes, rng: random.Random) -> bytes:
    if not b:
        return b"\x01"
    i = rng.randrange(len(b))
    return b[:i] + bytes([b[i] ^ (1 << rng.randrange(8))]) + b[i + 1:]


def _bump(v: int, rng: random.Random) -> int:
    return v ^ (1 << rng.randrange(16))


def _pick(seq, rng):
    return rng.randrange(len(seq))


def _tx(block: Block, **changes) -> Block:
    return replace(block, tx=replace(block.tx, **changes))


def _vote(block: Block, rng, **make) -> Block:
    i = _pick(block.votes, rng)
    v = block.votes[i]
    changes = {k: f(getattr(v, k)) for k, f in make.items()}
    votes = block.votes[:i] + (replace(v, **changes),) + block.votes[i + 1:]
    return replace(block, votes=votes)


def _rbox(block: Block, **changes) -> Block:
    return replace(block, rbox=replace(block.rbox, **changes))


# Each mutator returns a modified block or None when it does not apply.
def m_height(b, rng):
    return replace(b, height=_bump(b.height, rng))


def m_prev_hash(b, rng):
    return replace(b, prev_hash=_flip(b.prev_hash, rng))


def m_block_hash(b, rng):
    return replace(b, block_hash=_flip(b.block_hash, rng))


def m_tx_sender(b, rng):
    return _tx(b, sender=_flip(b.tx.sender, rng))


def m_tx_receiver(b, rng):
    return _tx(b, receiver=_flip(b.tx.receiver, rng))


def m_tx_tsp(b, rng):
    return _tx(b, tsp=_bump(b.tx.tsp, rng))


def m_tx_ctr(b, rng):
    return _tx(b, ctr_snapshot=_bump(b.tx.ctr_snapshot, rng))


def m_tx_kind(b, rng):
    kinds = [k for k in (TxKind.TRANSFER, TxKind.REGISTER, TxKind.LEAVE) if k != b.tx.kind]
    return _tx(b, kind=rng.choice(kinds))


def m_tx_coin(b, rng):
    coins = b.tx.coins
    if not coins:
        return _tx(b, coins=(CoinId(b.tx.id, 0),))
    i = _pick(coins, rng)
    c = coins[i]
    if rng.random() < 0.5:
        new = CoinId(c.origin, _bump(c.index, rng))
        return _tx(b, coins=coins[:i] + (new,) + coins[i + 1:])
    return _tx(b, coins=coins[:i] + coins[i + 1:])


def m_tx_signature(b, rng):
    return _tx(b, signature=_flip(b.tx.signature, rng))


def m_tx_id(b, rng):
    return _tx(b, id=_flip(b.tx.id, rng))


def m_vote_value(b, rng):
    return _vote(b, rng, value=lambda v: 1 - v if v in (0, 1) else 0)


def m_vote_voter(b, rng):
    return _vote(b, rng, voter=lambda x: _flip(x, rng))


def m_vote_prev_hash(b, rng):
    return _vote(b, rng, prev_hash=lambda x: _flip(x, rng))


def m_vote_tx_id(b, rng):
    return _vote(b, rng, tx_id=lambda x: _flip(x, rng))


def m_vote_signature(b, rng):
    return _vote(b, rng, signature=lambda x: _flip(x, rng))


def m_vote_drop(b, rng):
    i = _pick(b.votes, rng)
    return replace(b, votes=b.votes[:i] + b.votes[i + 1:])


def m_vote_swap(b, rng):
    if len(b.votes) < 2:
        return None
    i = rng.randrange(len(b.votes) - 1)
    v = list(b.votes)
    v[i], v[i + 1] = v[i + 1], v[i]
    return replace(b, votes=tuple(v))


def m_rbox_drop(b, rng):
    i = _pick(b.rbox.voters, rng)
    r = b.rbox
    return _rbox(b, voters=r.voters[:i] + r.voters[i + 1:],
                 signatures=r.signatures[:i] + r.signatures[i + 1:])


def m_rbox_voter(b, rng):
    i = _pick(b.rbox.voters, rng)
    v = b.rbox.voters
    return _rbox(b, voters=v[:i] + (_flip(v[i], rng),) + v[i + 1:])


def m_rbox_swap(b, rng):
    v = b.rbox.voters
    if len(v) < 2:
        return None
    i = rng.randrange(len(v) - 1)
    w = list(v)
    w[i], w[i + 1] = w[i + 1], w[i]
    return _rbox(b, voters=tuple(w))


def m_rbox_signature(b, rng):
    i = _pick(b.rbox.signatures, rng)
    s = b.rbox.signatures
    return _rbox(b, signatures=s[:i] + (_flip(s[i], rng),) + s[i + 1:])


def m_rbox_prev_hash(b, rng):
    return _rbox(b, prev_hash=_flip(b.rbox.prev_hash, rng))


def m_rbox_tx_id(b, rng):
    return _rbox(b, tx_id=_flip(b.rbox.tx_id, rng))


MUTATORS: dict[str, Callable] = {
    name[2:]: fn for name, fn in sorted(globals().items()) if name.startswith("m_")
}
GROUPS = {
    "body": [k for k in MUTATORS if k.startswith(("height", "prev", "block", "tx"))],
    "votes": [k for k in MUTATORS if k.startswith("vote")],
    "roster": [k for k in MUTATORS if k.startswith("rbox")],
}


def reseal(block: Block, before: Block) -> Block:
    """Recompute derived ids so only signatures can give a forgery away."""
    tx = block.tx
    if tx != before.tx and tx.id == before.tx.id:
        tx = replace(tx, id=tx.compute_id())
        block = replace(block, tx=tx)
    if block.block_hash == before.block_hash:
        block = replace(block, block_hash=block.compute_hash())
    return block


def verify_dump(data: bytes):
    """(ok, detail) exactly as the verify command judges a dump."""
    try:
        chain = load_chain(data)
    except CorruptDump as e:
        return False, f"corrupt: {e}"
    bad = verify_chain(chain, eligible_rosters(chain), subset=True)
    if bad is None:
        return True, "ok"
    return False, f"height {bad[0]}: {bad[1]}"


@dataclass
class TamperReport:
    trials: int = 0
    detected: int = 0
    by_mutator: Counter = field(default_factory=Counter)
    missed: list[str] = field(default_factory=list)

    @property
    def rate(self) -> Optional[float]:
        return self.detected / self.trials if self.trials else None

    def to_json(self) -> dict:
        return {"trials": self.trials, "detected": self.detected, "rate": self.rate,
                "by_mutator": dict(sorted(self.by_mutator.items())),
                "missed": self.missed}


def tamper(data: bytes, trials: int, seed: int = 0, group: Optional[str] = None,
           raw_bytes: bool = True) -> TamperReport:
    """Apply ``trials`` single-field mutations and count how many verify rejects.

    Half the structured mutations also recompute the tx id and block hash.
    With ``raw_bytes`` some trials flip one byte of the serialized dump instead.
    """
    chain = list(load_chain(data))
    rng = random.Random(seed)
    names = GROUPS[group] if group else list(MUTATORS)
    rep = TamperReport()
    while rep.trials < trials:
        if raw_bytes and group is None and rng.random() < 0.1:
            name = "raw_byte"
            start = len(dump_chain(chain[:1]))  # leave the genesis record alone
            i = rng.randrange(len(data)) if start >= len(data) else rng.randrange(start, len(data))
            forged = data[:i] + bytes([data[i] ^ (1 << rng.randrange(8))]) + data[i + 1:]
        else:
            name = rng.choice(names)
            h = rng.randrange(1, len(chain))
            block = MUTATORS[name](chain[h], rng)
            if block is None or block == chain[h]:
                continue
            if rng.random() < 0.5:
                name += "+reseal"
                block = reseal(block, chain[h])
            forged = dump_chain(chain[:h] + [block] + chain[h + 1:])
        if forged == data:
            continue
        rep.trials += 1
        rep.by_mutator[name] += 1
        ok, _ = verify_dump(forged)
        if ok:
            rep.missed.append(name)
        else:
            rep.detected += 1
    return rep
