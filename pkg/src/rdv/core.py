"""Identities, signatures, canonical encoding, blocks and chains.

Every structure here is an immutable value. Encodings are the canonical byte
form used for hashing, signing, wire messages and chain dumps: integers are
big-endian fixed width, variable-length fields and lists are length-prefixed,
and field order follows the dataclass field order.
"""
from __future__ import annotations

import enum
import functools
import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

NodeId = bytes
Hash = bytes

ID_LEN = 32
HASH_LEN = 32
SIG_LEN = 64
ZERO_HASH: Hash = bytes(HASH_LEN)
ZERO_ID: NodeId = bytes(ID_LEN)


class DecodeError(ValueError):
    """Raised when bytes are not a valid canonical encoding."""


# --------------------------------------------------------------------------
# hashing and signatures

def digest(data: bytes) -> Hash:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    node_id: NodeId
    secret: bytes = field(repr=False)

    @classmethod
    def from_seed(cls, seed: bytes | str) -> "KeyPair":
        """Derive a keypair deterministically from arbitrary seed material."""
        if isinstance(seed, str):
            seed = seed.encode()
        secret = digest(b"rdv-key:" + seed)
        pub = Ed25519PrivateKey.from_private_bytes(secret).public_key()
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

        return cls(pub.public_bytes(Encoding.Raw, PublicFormat.Raw), secret)


@functools.lru_cache(maxsize=None)
def _private_key(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@functools.lru_cache(maxsize=4096)
def _public_key(node_id: bytes) -> Optional[Ed25519PublicKey]:
    try:
        return Ed25519PublicKey.from_public_bytes(node_id)
    except ValueError:
        return None


# Ed25519 signatures are deterministic, so memoizing is observationally pure.
@functools.lru_cache(maxsize=1 << 16)
def _sign(secret: bytes, message: bytes) -> bytes:
    return _private_key(secret).sign(message)


def sign(keypair: KeyPair, message: bytes) -> bytes:
    return _sign(keypair.secret, message)


@functools.lru_cache(maxsize=1 << 18)
def verify(node_id: NodeId, message: bytes, signature: bytes) -> bool:
    if len(node_id) != ID_LEN or len(signature) != SIG_LEN:
        return False
    key = _public_key(bytes(node_id))
    if key is None:
        return False
    try:
        key.verify(signature, message)
    except InvalidSignature:
        return False
    return True


# --------------------------------------------------------------------------
# canonical encoding primitives

class Writer:
    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">Q", v))
        return self

    def i64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">q", v))
        return self

    def fixed(self, b: bytes, n: int) -> "Writer":
        if len(b) != n:
            raise ValueError(f"expected {n} bytes, got {len(b)}")
        self._parts.append(bytes(b))
        return self

    def var(self, b: bytes) -> "Writer":
        self.u32(len(b))
        self._parts.append(bytes(b))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes) -> None:
        self.data = memoryview(data)
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise DecodeError(f"truncated input at offset {self.pos}")
        out = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def fixed(self, n: int) -> bytes:
        return self._take(n)

    def var(self) -> bytes:
        return self._take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError(f"{len(self.data) - self.pos} trailing bytes")


def _bool(r: Reader) -> bool:
    v = r.u8()
    if v > 1:
        raise DecodeError(f"invalid boolean byte {v}")
    return bool(v)


# --------------------------------------------------------------------------
# domain types

@dataclass(frozen=True, order=True)
class CoinId:
    origin: Hash
    index: int

    def encode(self, w: Writer) -> None:
        w.fixed(self.origin, HASH_LEN).u32(self.index)

    @classmethod
    def decode(cls, r: Reader) -> "CoinId":
        return cls(r.fixed(HASH_LEN), r.u32())

    def short(self) -> str:
        return f"{self.origin[:3].hex()}#{self.index}"


class TxKind(enum.IntEnum):
    TRANSFER = 0
    CTR_EXCHANGE = 1
    REGISTER = 2
    LEAVE = 3
    MINT = 4  # genesis only


@dataclass(frozen=True)
class Exchange:
    """CTR-for-coins payload; the receiver countersigns the transaction body."""

    ctr_units: int
    counterparty_signature: bytes = b""


@dataclass(frozen=True)
class Allocation:
    """Genesis allotment: ``amount`` fresh coins, optionally pre-registered."""

    node: NodeId
    amount: int
    register: bool = False
    debt: bool = False

    def encode(self, w: Writer) -> None:
        w.fixed(self.node, ID_LEN).u32(self.amount).u8(self.register).u8(self.debt)

    @classmethod
    def decode(cls, r: Reader) -> "Allocation":
        return cls(r.fixed(ID_LEN), r.u32(), _bool(r), _bool(r))


def mint_origin(allocations: Sequence[Allocation], tsp: int) -> Hash:
    w = Writer().fixed(b"mint", 4).i64(tsp).u32(len(allocations))
    for a in allocations:
        a.encode(w)
    return digest(w.getvalue())


@dataclass(frozen=True)
class Transaction:
    sender: NodeId
    receiver: NodeId
    coins: tuple[CoinId, ...]
    tsp: int
    ctr_snapshot: int
    kind: TxKind
    exchange: Optional[Exchange] = None
    allocations: tuple[Allocation, ...] = ()
    signature: bytes = b""
    id: Hash = b""

    def body(self) -> bytes:
        """Bytes covered by the sender's and the counterparty's signatures."""
        w = Writer().fixed(b"tx", 2)
        w.fixed(self.sender, ID_LEN).fixed(self.receiver, ID_LEN)
        w.u32(len(self.coins))
        for c in self.coins:
            c.encode(w)
        w.i64(self.tsp).u64(self.ctr_snapshot).u8(int(self.kind))
        if self.exchange is None:
            w.u8(0)
        else:
            w.u8(1).u64(self.exchange.ctr_units)
        w.u32(len(self.allocations))
        for a in self.allocations:
            a.encode(w)
        return w.getvalue()

    def _id_preimage(self) -> bytes:
        w = Writer().var(self.body()).var(self.signature)
        w.var(self.exchange.counterparty_signature if self.exchange else b"")
        return w.getvalue()

    def compute_id(self) -> Hash:
        return digest(self._id_preimage())

    @property
    def spender(self) -> NodeId:
        """Identity whose coins the transaction consumes."""
        return self.receiver if self.kind == TxKind.CTR_EXCHANGE else self.sender

    def encode(self, w: Writer) -> None:
        w.fixed(self.id, HASH_LEN).var(self._id_preimage())

    @classmethod
    def decode(cls, r: Reader) -> "Transaction":
        tx_id = r.fixed(HASH_LEN)
        inner = Reader(r.var())
        body = Reader(inner.var())
        signature = inner.var()
        counter = inner.var()
        inner.done()
        if body.fixed(2) != b"tx":
            raise DecodeError("bad transaction tag")
        sender, receiver = body.fixed(ID_LEN), body.fixed(ID_LEN)
        coins = tuple(CoinId.decode(body) for _ in range(body.u32()))
        tsp, ctr = body.i64(), body.u64()
        try:
            kind = TxKind(body.u8())
        except ValueError as e:
            raise DecodeError(str(e)) from None
        exchange = Exchange(body.u64(), counter) if _bool(body) else None
        if exchange is None and counter:
            raise DecodeError("countersignature without exchange payload")
        allocations = tuple(Allocation.decode(body) for _ in range(body.u32()))
        body.done()
        return cls(sender, receiver, coins, tsp, ctr, kind, exchange,
                   allocations, signature, tx_id)

    def label(self) -> str:
        return f"tx:{self.id[:4].hex()}"


def make_transaction(keypair: KeyPair, receiver: NodeId, coins: Iterable[CoinId],
                     tsp: int, ctr_snapshot: int = 0,
                     kind: TxKind = TxKind.TRANSFER,
                     ctr_units: Optional[int] = None) -> Transaction:
    """Build and sign a transaction. Exchanges still need :func:`countersign`."""
    coins = tuple(coins)
    if len(set(coins)) != len(coins):
        raise ValueError("duplicate coin in transaction")
    exchange = None
    if kind == TxKind.CTR_EXCHANGE:
        if not ctr_units or ctr_units <= 0:
            raise ValueError("ctr exchange needs positive ctr_units")
        exchange = Exchange(ctr_units)
    elif ctr_units is not None:
        raise ValueError("ctr_units only valid for ctr exchange")
    if not coins and kind != TxKind.LEAVE:
        raise ValueError(f"{kind.name.lower()} transaction needs coins")
    tx = Transaction(keypair.node_id, receiver, coins, tsp, ctr_snapshot, kind, exchange)
    tx = replace(tx, signature=sign(keypair, tx.body()))
    return replace(tx, id=tx.compute_id())


def countersign(tx: Transaction, keypair: KeyPair) -> Transaction:
    if tx.exchange is None:
        raise ValueError("only ctr exchanges are countersigned")
    if keypair.node_id != tx.receiver:
        raise ValueError("counterparty must be the receiver")
    ex = replace(tx.exchange, counterparty_signature=sign(keypair, tx.body()))
    tx = replace(tx, exchange=ex)
    return replace(tx, id=tx.compute_id())


def make_mint(allocations: Sequence[Allocation], tsp: int = 0) -> Transaction:
    allocations = tuple(allocations)
    origin = mint_origin(allocations, tsp)
    total = sum(a.amount for a in allocations)
    coins = tuple(CoinId(origin, i) for i in range(total))
    tx = Transaction(ZERO_ID, ZERO_ID, coins, tsp, 0, TxKind.MINT,
                     allocations=allocations)
    return replace(tx, id=tx.compute_id())


def minted_coins(tx: Transaction) -> dict[NodeId, list[CoinId]]:
    """Coins handed to each allocation of a mint transaction, in order."""
    out: dict[NodeId, list[CoinId]] = {}
    i = 0
    for a in tx.allocations:
        out.setdefault(a.node, []).extend(tx.coins[i:i + a.amount])
        i += a.amount
    return out


def tx_structure_error(tx: Transaction) -> Optional[str]:
    """Intrinsic checks that need no ledger: id, signatures, payload shape."""
    if tx.compute_id() != tx.id:
        return "tx-id"
    if len(set(tx.coins)) != len(tx.coins):
        return "tx-duplicate-coin"
    if tx.kind == TxKind.MINT:
        return None if tx.sender == ZERO_ID else "tx-mint-sender"
    if not tx.coins and tx.kind != TxKind.LEAVE:
        return "tx-no-coins"
    if tx.allocations:
        return "tx-allocations"
    if not verify(tx.sender, tx.body(), tx.signature):
        return "tx-signature"
    if tx.kind == TxKind.CTR_EXCHANGE:
        ex = tx.exchange
        if ex is None or ex.ctr_units <= 0:
            return "tx-exchange-payload"
        if not verify(tx.receiver, tx.body(), ex.counterparty_signature):
            return "tx-countersignature"
    elif tx.exchange is not None:
        return "tx-exchange-payload"
    return None


def _vote_message(tx_id: Hash, voter: NodeId, prev_hash: Hash, value: int) -> bytes:
    return (Writer().fixed(b"vote", 4).fixed(tx_id, HASH_LEN).fixed(voter, ID_LEN)
            .fixed(prev_hash, HASH_LEN).u8(value).getvalue())


def _rbox_message(tx_id: Hash, voters: Sequence[NodeId], prev_hash: Hash) -> bytes:
    w = Writer().fixed(b"rbox", 4).fixed(tx_id, HASH_LEN).u32(len(voters))
    for v in voters:
        w.fixed(v, ID_LEN)
    return w.fixed(prev_hash, HASH_LEN).getvalue()


@dataclass(frozen=True)
class Vote:
    tx_id: Hash
    voter: NodeId
    prev_hash: Hash
    value: int
    signature: bytes

    def message(self) -> bytes:
        return _vote_message(self.tx_id, self.voter, self.prev_hash, self.value)

    def verifies(self) -> bool:
        return self.value in (0, 1) and verify(self.voter, self.message(), self.signature)

    def encode(self, w: Writer) -> None:
        w.fixed(self.tx_id, HASH_LEN).fixed(self.voter, ID_LEN)
        w.fixed(self.prev_hash, HASH_LEN).u8(self.value).var(self.signature)

    @classmethod
    def decode(cls, r: Reader) -> "Vote":
        return cls(r.fixed(HASH_LEN), r.fixed(ID_LEN), r.fixed(HASH_LEN), r.u8(), r.var())


def make_vote(keypair: KeyPair, tx_id: Hash, prev_hash: Hash, value: int) -> Vote:
    if value not in (0, 1):
        raise ValueError("vote value must be 0 or 1")
    msg = _vote_message(tx_id, keypair.node_id, prev_hash, value)
    return Vote(tx_id, keypair.node_id, prev_hash, value, sign(keypair, msg))


class VoteBoxSet:
    """Votes for one round keyed by (tx-id, voter); one entry per voter."""

    def __init__(self, votes: Iterable[Vote] = ()) -> None:
        self._entries: dict[tuple[Hash, NodeId], Vote] = {}
        for v in votes:
            self.add(v)

    def add(self, vote: Vote) -> bool:
        key = (vote.tx_id, vote.voter)
        if key in self._entries:
            return False
        for other in self._entries.values():
            if other.tx_id != vote.tx_id or other.prev_hash != vote.prev_hash:
                raise ValueError("votes in one box must share tx-id and prev-hash")
        self._entries[key] = vote
        return True

    def get(self, tx_id: Hash, voter: NodeId) -> Optional[Vote]:
        return self._entries.get((tx_id, voter))

    def discard(self, voter: NodeId) -> None:
        for key in [k for k in self._entries if k[1] == voter]:
            del self._entries[key]

    def voters(self) -> set[NodeId]:
        return {k[1] for k in self._entries}

    def sorted(self) -> tuple[Vote, ...]:
        return tuple(sorted(self._entries.values(), key=lambda v: v.voter))

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Vote]:
        return iter(self.sorted())


@dataclass(frozen=True)
class VoteRBox:
    tx_id: Hash
    voters: tuple[NodeId, ...]
    prev_hash: Hash
    signatures: tuple[bytes, ...]

    def message(self) -> bytes:
        return _rbox_message(self.tx_id, self.voters, self.prev_hash)

    def encode(self, w: Writer) -> None:
        w.fixed(self.tx_id, HASH_LEN).u32(len(self.voters))
        for v in self.voters:
            w.fixed(v, ID_LEN)
        w.fixed(self.prev_hash, HASH_LEN).u32(len(self.signatures))
        for s in self.signatures:
            w.var(s)

    @classmethod
    def decode(cls, r: Reader) -> "VoteRBox":
        tx_id = r.fixed(HASH_LEN)
        voters = tuple(r.fixed(ID_LEN) for _ in range(r.u32()))
        prev = r.fixed(HASH_LEN)
        sigs = tuple(r.var() for _ in range(r.u32()))
        return cls(tx_id, voters, prev, sigs)


def rbox_message(tx_id: Hash, voters: Sequence[NodeId], prev_hash: Hash) -> bytes:
    return _rbox_message(tx_id, tuple(sorted(voters)), prev_hash)


def sign_rbox(keypair: KeyPair, tx_id: Hash, voters: Sequence[NodeId], prev_hash: Hash) -> bytes:
    return sign(keypair, rbox_message(tx_id, voters, prev_hash))


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: Hash
    tx: Transaction
    votes: tuple[Vote, ...]
    rbox: VoteRBox
    block_hash: Hash = b""

    def _content(self) -> bytes:
        w = Writer().u64(self.height).fixed(self.prev_hash, HASH_LEN)
        self.tx.encode(w)
        w.u32(len(self.votes))
        for v in self.votes:
            v.encode(w)
        self.rbox.encode(w)
        return w.getvalue()

    def compute_hash(self) -> Hash:
        return digest(self._content())

    def encode(self, w: Writer) -> None:
        w.fixed(self.block_hash, HASH_LEN).var(self._content())

    @classmethod
    def decode(cls, r: Reader) -> "Block":
        block_hash = r.fixed(HASH_LEN)
        inner = Reader(r.var())
        height, prev = inner.u64(), inner.fixed(HASH_LEN)
        tx = Transaction.decode(inner)
        votes = tuple(Vote.decode(inner) for _ in range(inner.u32()))
        rbox = VoteRBox.decode(inner)
        inner.done()
        return cls(height, prev, tx, votes, rbox, block_hash)

    def ones(self) -> int:
        return sum(v.value == 1 for v in self.votes)

    def zeros(self) -> int:
        return sum(v.value == 0 for v in self.votes)


def seal_block(height: int, prev_hash: Hash, tx: Transaction, votes: Iterable[Vote],
               rbox: VoteRBox) -> Block:
    b = Block(height, prev_hash, tx, tuple(sorted(votes, key=lambda v: v.voter)), rbox)
    return replace(b, block_hash=b.compute_hash())


def make_genesis(mint: Transaction) -> Block:
    rbox = VoteRBox(mint.id, (), ZERO_HASH, ())
    return seal_block(0, ZERO_HASH, mint, (), rbox)


def encode(value) -> bytes:
    """Canonical bytes of any domain value that knows how to encode itself."""
    w = Writer()
    value.encode(w)
    return w.getvalue()


def decode(cls, data: bytes):
    r = Reader(data)
    out = cls.decode(r)
    r.done()
    return out


# --------------------------------------------------------------------------
# chain

class ForkError(RuntimeError):
    """Appending would place a second block at an existing height."""


class Chain:
    """Append-only, hash-linked sequence of blocks starting at genesis."""

    def __init__(self, genesis: Block) -> None:
        if genesis.height != 0 or genesis.prev_hash != ZERO_HASH:
            raise ValueError("genesis must be height 0 with a zero prev-hash")
        self._blocks: list[Block] = [genesis]

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block]) -> "Chain":
        """Wrap blocks without validation (used when loading dumps for audit)."""
        c = cls.__new__(cls)
        c._blocks = list(blocks)
        return c

    def append(self, block: Block) -> None:
        tip = self._blocks[-1]
        if block.height <= tip.height:
            raise ForkError(f"height {block.height} already present")
        if block.height != tip.height + 1 or block.prev_hash != tip.block_hash:
            raise ValueError("block does not extend the tip")
        self._blocks.append(block)

    @property
    def tip(self) -> Block:
        return self._blocks[-1]

    @property
    def genesis(self) -> Block:
        return self._blocks[0]

    def __len__(self) -> int:
        return len(self._blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self._blocks)

    def __getitem__(self, i):
        return self._blocks[i]

    def hashes(self) -> list[Hash]:
        return [b.block_hash for b in self._blocks]


DUMP_MAGIC = b"RDVCHAIN\x01"


class CorruptDump(ValueError):
    pass


def dump_chain(chain: Iterable[Block]) -> bytes:
    parts = [DUMP_MAGIC]
    for b in chain:
        rec = encode(b)
        parts.append(struct.pack(">I", len(rec)))
        parts.append(rec)
    return b"".join(parts)


def load_chain(data: bytes) -> Chain:
    if not data.startswith(DUMP_MAGIC):
        raise CorruptDump("missing chain dump header")
    r = Reader(data[len(DUMP_MAGIC):])
    blocks = []
    try:
        while r.pos < len(r.data):
            blocks.append(decode(Block, r.var()))
    except DecodeError as e:
        raise CorruptDump(f"record {len(blocks)}: {e}") from None
    if not blocks:
        raise CorruptDump("empty chain dump")
    return Chain.from_blocks(blocks)


# --------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class Violation:
    check: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.check}: {self.detail}" if self.detail else self.check


def verify_block(block: Block, prev: Block, roster: Optional[Sequence[NodeId]] = None,
                 *, subset: bool = False) -> Optional[Violation]:
    """Structural and cryptographic check of ``block`` on top of ``prev``.

    Returns None when the block is valid, otherwise the first failed check.
    ``roster`` is the expected voter list; with ``subset=True`` it is instead
    the set of identities allowed to appear.
    """
    if block.prev_hash != prev.block_hash:
        return Violation("prev-hash", f"height {block.height}")
    if block.height != prev.height + 1:
        return Violation("height", f"{prev.height} -> {block.height}")
    if block.compute_hash() != block.block_hash:
        return Violation("block-hash")
    tx = block.tx
    if tx.kind == TxKind.MINT:
        return Violation("tx-kind", "mint outside genesis")
    err = tx_structure_error(tx)
    if err:
        return Violation(err)
    rbox = block.rbox
    if rbox.tx_id != tx.id:
        return Violation("vote-rbox tx-id")
    if rbox.prev_hash != block.prev_hash:
        return Violation("vote-rbox prev-hash")
    if any(a >= b for a, b in zip(rbox.voters, rbox.voters[1:])):
        return Violation("vote-rbox order")
    if not rbox.voters:
        return Violation("vote-rbox empty")
    if len(rbox.signatures) != len(rbox.voters):
        return Violation("vote-rbox signature", "count mismatch")
    seen: set[NodeId] = set()
    for prior, v in zip((None,) + block.votes, block.votes):
        if prior is not None and prior.voter >= v.voter:
            return Violation("vote-box order")
        if v.tx_id != tx.id:
            return Violation("vote tx-id", v.voter.hex()[:8])
        if v.prev_hash != block.prev_hash:
            return Violation("vote prev-hash", v.voter.hex()[:8])
        seen.add(v.voter)
    if seen != set(rbox.voters) or len(block.votes) != len(rbox.voters):
        return Violation("vote-box membership")
    if block.ones() <= block.zeros():
        return Violation("majority", f"{block.ones()} ones vs {block.zeros()} zeros")
    for v in block.votes:
        if not v.verifies():
            return Violation("vote signature", v.voter.hex()[:8])
    msg = rbox.message()
    for voter, sig in zip(rbox.voters, rbox.signatures):
        if not verify(voter, msg, sig):
            return Violation("vote-rbox signature", voter.hex()[:8])
    if roster is not None:
        if subset:
            if not set(rbox.voters) <= set(roster):
                return Violation("roster", "voter outside the registered set")
        elif tuple(sorted(roster)) != rbox.voters:
            return Violation("roster", "voter list differs from expected roster")
    return None


def verify_genesis(block: Block, expected_hash: Optional[Hash] = None) -> Optional[Violation]:
    if block.height != 0 or block.prev_hash != ZERO_HASH:
        return Violation("genesis", "height/prev-hash")
    if block.tx.kind != TxKind.MINT or block.votes or block.rbox.voters:
        return Violation("genesis", "shape")
    err = tx_structure_error(block.tx)
    if err:
        return Violation(err, "genesis")
    if block.tx.coins != make_mint(block.tx.allocations, block.tx.tsp).coins:
        return Violation("genesis", "minted coins")
    if block.rbox != VoteRBox(block.tx.id, (), ZERO_HASH, ()):
        return Violation("genesis", "vote-rbox")
    if block.compute_hash() != block.block_hash:
        return Violation("block-hash", "genesis")
    if expected_hash is not None and block.block_hash != expected_hash:
        return Violation("genesis", "differs from configured genesis")
    return None


def verify_chain(chain: Sequence[Block],
                 rosters: Optional[Mapping[int, Sequence[NodeId]]] = None,
                 *, genesis_hash: Optional[Hash] = None,
                 subset: bool = False) -> Optional[tuple[int, Violation]]:
    """Check a whole chain; returns None or (first bad height, violation).

    ``rosters`` maps each height to the voter list expected at that height.
    """
    if len(chain) == 0:
        raise ValueError("empty chain")
    bad = verify_genesis(chain[0], genesis_hash)
    if bad:
        return 0, bad
    for i in range(1, len(chain)):
        roster = None if rosters is None else rosters.get(i)
        if rosters is not None and roster is None:
            return i, Violation("roster", "no roster recorded for height")
        bad = verify_block(chain[i], chain[i - 1], roster, subset=subset)
        if bad:
            return i, bad
    return None


def eligible_rosters(chain: Sequence[Block]) -> dict[int, list[NodeId]]:
    """Per-height set of identities that may vote, rebuilt from the chain alone.

    Registration and leave are on-chain transactions, so the registered set at
    each height is recoverable. Suspensions and penalty demotions are not, so
    the result is an upper bound on each round's roster.
    """
    registered: dict[NodeId, int] = {}
    for a in chain[0].tx.allocations:
        if a.register:
            registered[a.node] = chain[0].tx.tsp
    out: dict[int, list[NodeId]] = {}
    for i in range(1, len(chain)):
        tx = chain[i].tx
        out[i] = sorted(n for n, at in registered.items() if at < tx.tsp)
        if tx.kind == TxKind.REGISTER:
            registered.setdefault(tx.sender, tx.tsp)
        elif tx.kind == TxKind.LEAVE:
            registered.pop(tx.sender, None)
    return out


# --------------------------------------------------------------------------
# JSON rendering (for humans; not canonical)

def tx_to_json(tx: Transaction) -> dict:
    d = {
        "id": tx.id.hex(),
        "kind": tx.kind.name.lower(),
        "sender": tx.sender.hex(),
        "receiver": tx.receiver.hex(),
        "coins": [c.short() for c in tx.coins],
        "tsp": tx.tsp,
        "ctr_snapshot": tx.ctr_snapshot,
    }
    if tx.exchange is not None:
        d["ctr_units"] = tx.exchange.ctr_units
    if tx.allocations:
        d["allocations"] = [
            {"node": a.node.hex(), "amount": a.amount, "register": a.register, "debt": a.debt}
            for a in tx.allocations
        ]
    return d


def block_to_json(block: Block) -> dict:
    return {
        "height": block.height,
        "hash": block.block_hash.hex(),
        "prev_hash": block.prev_hash.hex(),
        "tx": tx_to_json(block.tx),
        "votes": {v.voter.hex(): v.value for v in block.votes},
        "vote_rbox": [v.hex() for v in block.rbox.voters],
    }
