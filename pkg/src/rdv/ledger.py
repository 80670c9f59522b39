"""Economic state folded from blocks and round outcomes.

Coins are indivisible unit-value tokens. Every coin is always in exactly one
of three places: an owner's spendable holdings, an owner's locked deposit, or
the blocked list (frozen forever as a penalty). Bootstrap and penalty debts
are counters, not coins; they are netted against coins the identity receives
later.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .core import (
    Block, CoinId, Hash, NodeId, Transaction, TxKind, Writer, ZERO_ID, encode,
    minted_coins,
)
from .params import ProtocolParams


class LedgerError(ValueError):
    pass


class Status(enum.Enum):
    ACTIVE = "active"
    SUSPENDED = "suspended"
    LEFT = "left"


@dataclass(frozen=True)
class VoterRecord:
    node: NodeId
    registered_at: int
    locked: tuple[CoinId, ...] = ()
    owed_deposit: int = 0
    owed_penalty: int = 0
    penalties: int = 0
    last_participation: int = 0
    suspended_until: Optional[int] = None
    status: Status = Status.ACTIVE
    debt: bool = False

    @property
    def deposit(self) -> int:
        """Pledged collateral; negative while a bootstrap deposit is owed."""
        return len(self.locked) - self.owed_deposit

    def status_at(self, now: int) -> Status:
        if self.status == Status.LEFT:
            return Status.LEFT
        if self.suspended_until is not None and now < self.suspended_until:
            return Status.SUSPENDED
        return Status.ACTIVE


@dataclass(frozen=True)
class RoundOutcome:
    """Economic consequences of one finished round."""

    tx_id: Hash
    accepted: bool
    penalized: tuple[NodeId, ...] = ()
    rewarded: tuple[NodeId, ...] = ()
    tie: bool = False


def outcome_from_votes(tx_id: Hash, votes: dict[NodeId, int],
                       cheaters: Iterable[NodeId] = ()) -> RoundOutcome:
    """Majority of ones accepts; anything else (ties included) rejects.

    Voters on the losing side are penalized and the winning side earns one
    CTR each. ``cheaters`` are penalized regardless and never rewarded.
    """
    ones = sum(1 for v in votes.values() if v == 1)
    zeros = sum(1 for v in votes.values() if v == 0)
    accepted = ones > zeros
    win = 1 if accepted else 0
    cheaters = set(cheaters)
    penalized = sorted({n for n, v in votes.items() if v != win} | cheaters)
    rewarded = sorted(n for n, v in votes.items() if v == win and n not in cheaters)
    return RoundOutcome(tx_id, accepted, tuple(penalized), tuple(rewarded),
                        tie=ones == zeros and ones > 0)


@dataclass
class LedgerState:
    coin_owner: dict[CoinId, NodeId] = field(default_factory=dict)
    holdings: dict[NodeId, frozenset[CoinId]] = field(default_factory=dict)
    locked_by: dict[CoinId, NodeId] = field(default_factory=dict)
    blocked: dict[CoinId, NodeId] = field(default_factory=dict)
    moved: frozenset[CoinId] = frozenset()
    voters: dict[NodeId, VoterRecord] = field(default_factory=dict)
    ctr: dict[NodeId, int] = field(default_factory=dict)
    height: int = -1
    minted: int = 0

    def copy(self) -> "LedgerState":
        return LedgerState(dict(self.coin_owner), dict(self.holdings), dict(self.locked_by),
                           dict(self.blocked), self.moved, dict(self.voters),
                           dict(self.ctr), self.height, self.minted)

    # -- queries -----------------------------------------------------------
    def spendable(self, node: NodeId) -> frozenset[CoinId]:
        return self.holdings.get(node, frozenset())

    def ctr_of(self, node: NodeId) -> int:
        return self.ctr.get(node, 0)

    def owns_spendable(self, node: NodeId, coins: Iterable[CoinId]) -> bool:
        held = self.spendable(node)
        return all(c in held for c in coins)

    def record(self, node: NodeId) -> Optional[VoterRecord]:
        return self.voters.get(node)

    def roster(self, now: int, registered_before: Optional[int] = None) -> list[NodeId]:
        """Voters active at ``now``, optionally only those registered before a time."""
        out = []
        for n, rec in self.voters.items():
            if rec.status_at(now) != Status.ACTIVE:
                continue
            if registered_before is not None and rec.registered_at >= registered_before:
                continue
            out.append(n)
        return sorted(out)

    def encode(self, w: Writer) -> None:
        """Canonical snapshot: every map serialized in sorted key order."""
        w.u64(self.height + 1).u64(self.minted)
        w.u32(len(self.coin_owner))
        for c in sorted(self.coin_owner):
            c.encode(w)
            w.fixed(self.coin_owner[c], 32)
            w.u8(0 if c in self.spendable(self.coin_owner[c])
                 else 1 if c in self.locked_by else 2)
            w.u8(c in self.moved)
        w.u32(len(self.voters))
        for n in sorted(self.voters):
            r = self.voters[n]
            w.fixed(n, 32).i64(r.registered_at).u32(len(r.locked))
            for c in r.locked:
                c.encode(w)
            w.u64(r.owed_deposit).u64(r.owed_penalty).u64(r.penalties)
            w.i64(r.last_participation).i64(-1 if r.suspended_until is None else r.suspended_until)
            w.var(r.status.value.encode()).u8(r.debt)
        w.u32(len(self.ctr))
        for n in sorted(self.ctr):
            w.fixed(n, 32).u64(self.ctr[n])

    def snapshot(self) -> bytes:
        return encode(self)

    def to_json(self) -> dict:
        nodes = sorted(set(self.holdings) | set(self.voters) | set(self.ctr)
                       | set(self.blocked.values()))
        return {
            "height": self.height,
            "minted": self.minted,
            "balances": {n.hex(): balance_of(self, n) for n in nodes},
            "voters": {
                n.hex(): {
                    "status": r.status.value,
                    "deposit": r.deposit,
                    "registered_at": r.registered_at,
                    "suspended_until": r.suspended_until,
                    "penalties": r.penalties,
                    "owed_penalty": r.owed_penalty,
                }
                for n, r in sorted(self.voters.items())
            },
        }


def balance_of(state: LedgerState, node: NodeId) -> dict[str, int]:
    rec = state.voters.get(node)
    deposited = rec.deposit if rec is not None and rec.status != Status.LEFT else 0
    return {
        "spendable": len(state.spendable(node)),
        "deposited": deposited,
        "blocked": sum(1 for owner in state.blocked.values() if owner == node),
        "ctr": state.ctr_of(node),
    }


def conservation_holds(state: LedgerState) -> bool:
    spend = sum(len(h) for h in state.holdings.values())
    return spend + len(state.locked_by) + len(state.blocked) == state.minted == len(state.coin_owner)


# --------------------------------------------------------------------------
# coin movement helpers (mutate a private copy)

def _take(state: LedgerState, node: NodeId, coins: Iterable[CoinId]) -> None:
    coins = list(coins)
    held = state.spendable(node)
    missing = [c for c in coins if c not in held]
    if missing:
        raise LedgerError(f"{node.hex()[:8]} cannot spend {missing[0].short()}")
    state.holdings[node] = held.difference(coins)
    state.moved = state.moved.union(coins)


def _credit(state: LedgerState, node: NodeId, coins: Iterable[CoinId]) -> None:
    """Hand coins to ``node``, settling penalty debt then deposit debt first."""
    coins = sorted(coins)
    rec = state.voters.get(node)
    free = []
    for c in coins:
        state.coin_owner[c] = node
        if rec is not None and rec.owed_penalty > 0:
            state.blocked[c] = node
            rec = replace(rec, owed_penalty=rec.owed_penalty - 1)
        elif rec is not None and rec.owed_deposit > 0 and rec.status != Status.LEFT:
            state.locked_by[c] = node
            rec = replace(rec, locked=rec.locked + (c,), owed_deposit=rec.owed_deposit - 1)
        else:
            free.append(c)
    if rec is not None:
        state.voters[node] = rec
    state.holdings[node] = state.spendable(node).union(free)


def _lock(state: LedgerState, node: NodeId, coins: Iterable[CoinId]) -> tuple[CoinId, ...]:
    coins = tuple(sorted(coins))
    _take(state, node, coins)
    for c in coins:
        state.locked_by[c] = node
    return coins


def _release(state: LedgerState, rec: VoterRecord) -> VoterRecord:
    for c in rec.locked:
        del state.locked_by[c]
    state.holdings[rec.node] = state.spendable(rec.node).union(rec.locked)
    return replace(rec, locked=(), owed_deposit=0, status=Status.LEFT, suspended_until=None)


def _penalize(state: LedgerState, node: NodeId, params: ProtocolParams) -> None:
    rec = state.voters.get(node)
    if rec is None:
        return
    take = rec.locked[:params.penalty]
    for c in take:
        del state.locked_by[c]
        state.blocked[c] = node
    rec = replace(rec, locked=rec.locked[len(take):],
                  owed_penalty=rec.owed_penalty + params.penalty - len(take),
                  penalties=rec.penalties + params.penalty)
    if rec.status != Status.LEFT and rec.penalties >= params.deposit:
        # collateral exhausted: demoted to an ordinary node
        rec = _release(state, rec)
    state.voters[node] = rec


# --------------------------------------------------------------------------
# public operations

def genesis_state(genesis: Block, params: ProtocolParams) -> LedgerState:
    tx = genesis.tx
    if tx.kind != TxKind.MINT:
        raise LedgerError("genesis must carry a mint transaction")
    state = LedgerState(height=0, minted=len(tx.coins))
    for node, coins in minted_coins(tx).items():
        for c in coins:
            state.coin_owner[c] = node
        state.holdings[node] = state.spendable(node).union(coins)
    for a in tx.allocations:
        if a.register and a.node not in state.voters:
            state, _ = register(state, a.node, params, tx.tsp, allow_debt=a.debt)
    return state


def register(state: LedgerState, node: NodeId, params: ProtocolParams, now: int,
             allow_debt: bool = False, coins: Optional[Iterable[CoinId]] = None
             ) -> tuple[LedgerState, VoterRecord]:
    """Pledge ``d`` coins and become a voter.

    With ``allow_debt`` a node that cannot cover the deposit registers with a
    deposit of ``-d`` and repays it from coins it receives later.
    """
    prev = state.voters.get(node)
    if prev is not None and prev.status != Status.LEFT:
        raise LedgerError(f"{node.hex()[:8]} is already registered")
    state = state.copy()
    held = sorted(state.spendable(node))
    if coins is None:
        coins = held[:params.deposit] if len(held) >= params.deposit else None
    else:
        coins = sorted(coins)
        if len(coins) != params.deposit:
            raise LedgerError(f"deposit must be exactly {params.deposit} coins")
    carried = prev.owed_penalty if prev is not None else 0
    if coins is not None:
        locked = _lock(state, node, coins)
        rec = VoterRecord(node, now, locked=locked, owed_penalty=carried, last_participation=now)
    elif allow_debt:
        rec = VoterRecord(node, now, owed_deposit=params.deposit, owed_penalty=carried,
                          last_participation=now, debt=True)
    else:
        raise LedgerError(f"{node.hex()[:8]} holds {len(held)} coins, deposit needs {params.deposit}")
    state.voters[node] = rec
    return state, rec


def leave(state: LedgerState, node: NodeId) -> LedgerState:
    rec = state.voters.get(node)
    if rec is None or rec.status == Status.LEFT:
        raise LedgerError(f"{node.hex()[:8]} is not a registered voter")
    state = state.copy()
    state.voters[node] = _release(state, rec)
    return state


def exchange_ctr(state: LedgerState, tx: Transaction) -> LedgerState:
    """Atomically move CTR sender->receiver and coins receiver->sender."""
    err = exchange_error(state, tx)
    if err:
        raise LedgerError(err)
    state = state.copy()
    units = tx.exchange.ctr_units
    state.ctr[tx.sender] = state.ctr_of(tx.sender) - units
    state.ctr[tx.receiver] = state.ctr_of(tx.receiver) + units
    _take(state, tx.receiver, tx.coins)
    _credit(state, tx.sender, tx.coins)
    return state


def exchange_error(state: LedgerState, tx: Transaction) -> Optional[str]:
    from .core import tx_structure_error

    if tx.kind != TxKind.CTR_EXCHANGE or tx.exchange is None:
        return "not a ctr exchange"
    err = tx_structure_error(tx)
    if err:
        return err
    if state.ctr_of(tx.sender) < tx.exchange.ctr_units:
        return "insufficient ctr"
    if not state.owns_spendable(tx.receiver, tx.coins):
        return "insufficient coins"
    return None


def tx_error(state: LedgerState, tx: Transaction, params: ProtocolParams) -> Optional[str]:
    """Ledger-level validity (ownership, roles); None when the tx can apply."""
    if tx.kind == TxKind.MINT:
        return "mint outside genesis"
    if tx.kind == TxKind.CTR_EXCHANGE:
        return exchange_error(state, tx)
    if tx.kind == TxKind.TRANSFER:
        if tx.receiver == ZERO_ID:
            return "burn address"
        return None if state.owns_spendable(tx.sender, tx.coins) else "insufficient coins"
    rec = state.voters.get(tx.sender)
    if tx.kind == TxKind.REGISTER:
        if rec is not None and rec.status != Status.LEFT:
            return "already registered"
        if len(tx.coins) != params.deposit:
            return "wrong deposit size"
        return None if state.owns_spendable(tx.sender, tx.coins) else "insufficient coins"
    if tx.kind == TxKind.LEAVE:
        if rec is None or rec.status == Status.LEFT:
            return "not registered"
        return None if not tx.coins else "leave carries no coins"
    return "unknown kind"


def _apply_outcome(state: LedgerState, outcome: RoundOutcome, params: ProtocolParams) -> None:
    for n in outcome.penalized:
        _penalize(state, n, params)
    for n in outcome.rewarded:
        state.ctr[n] = state.ctr_of(n) + 1


def apply_block(state: LedgerState, block: Block, outcome: RoundOutcome,
                params: ProtocolParams, strict: bool = True) -> LedgerState:
    """Fold one accepted block and its round outcome into a new state.

    A dishonest majority can confirm a transaction the ledger cannot carry out.
    With ``strict`` that raises; otherwise only the round outcome is applied.
    """
    if block.height != state.height + 1:
        raise LedgerError(f"expected height {state.height + 1}, got {block.height}")
    if not outcome.accepted or outcome.tx_id != block.tx.id:
        raise LedgerError("outcome does not describe this block")
    tx = block.tx
    err = tx_error(state, tx, params)
    if err and strict:
        raise LedgerError(f"{tx.label()}: {err}")
    state = state.copy()
    state.height = block.height
    _apply_outcome(state, outcome, params)
    if err:
        return state
    if tx.kind == TxKind.TRANSFER:
        _take(state, tx.sender, tx.coins)
        _credit(state, tx.receiver, tx.coins)
    elif tx.kind == TxKind.CTR_EXCHANGE:
        units = tx.exchange.ctr_units
        if state.ctr_of(tx.sender) < units:
            raise LedgerError("insufficient ctr")
        state.ctr[tx.sender] = state.ctr_of(tx.sender) - units
        state.ctr[tx.receiver] = state.ctr_of(tx.receiver) + units
        _take(state, tx.receiver, tx.coins)
        _credit(state, tx.sender, tx.coins)
    elif tx.kind == TxKind.REGISTER:
        prev = state.voters.get(tx.sender)
        carried = prev.owed_penalty if prev is not None else 0
        locked = _lock(state, tx.sender, tx.coins)
        state.voters[tx.sender] = VoterRecord(tx.sender, tx.tsp, locked=locked,
                                              owed_penalty=carried,
                                              last_participation=tx.tsp)
    elif tx.kind == TxKind.LEAVE:
        rec = state.voters[tx.sender]
        if rec.status != Status.LEFT:  # may already be demoted by this round's penalty
            state.voters[tx.sender] = _release(state, rec)
    return state


def apply_rejection(state: LedgerState, outcome: RoundOutcome,
                    params: ProtocolParams) -> LedgerState:
    """Penalties and rewards of a round that produced no block."""
    if outcome.accepted:
        raise LedgerError("accepted rounds go through apply_block")
    state = state.copy()
    _apply_outcome(state, outcome, params)
    return state


def suspend(state: LedgerState, node: NodeId, until: int) -> LedgerState:
    state = state.copy()
    state.voters[node] = replace(state.voters[node], suspended_until=until)
    return state


def note_participation(state: LedgerState, voters: Iterable[NodeId], now: int) -> LedgerState:
    state = state.copy()
    for n in voters:
        if n in state.voters:
            state.voters[n] = replace(state.voters[n], last_participation=now)
    return state
