"""The voting round: vote casting, collection with inactivity removal,
roster signing and tallying."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

from .core import (
    Block, Hash, KeyPair, NodeId, Transaction, Vote, VoteBoxSet, VoteRBox,
    make_vote, rbox_message, seal_block, sign_rbox, tx_structure_error, verify,
)
from . import ledger as _ledger
from .ledger import LedgerState, RoundOutcome, Status, VoterRecord, outcome_from_votes
from .params import ProtocolParams
from .priority import is_double_spent, timestamp_plausible


class Phase(enum.IntEnum):
    COLLECTING = 0
    SIGNING_ROSTER = 1
    TALLYING = 2
    DONE = 3


class Abstain(enum.Enum):
    """Reasons a voter casts nothing for the head transaction."""

    BEFORE_REGISTRATION = "before-registration"
    DOUBLE_SPENT = "double-spent"
    NOT_ACTIVE = "not-active"


def register(node: NodeId, ledger: LedgerState, params: ProtocolParams, now: int,
             allow_debt: bool = False) -> tuple[LedgerState, VoterRecord]:
    return _ledger.register(ledger, node, params, now, allow_debt=allow_debt)


def leave(node: NodeId, ledger: LedgerState) -> LedgerState:
    return _ledger.leave(ledger, node)


def reinstate(record: VoterRecord, now: int) -> VoterRecord:
    """Clear an expired suspension; the boundary tick counts as expired."""
    if record.suspended_until is None or record.status == Status.LEFT:
        return record
    if now >= record.suspended_until:
        return replace(record, suspended_until=None)
    return record


def verify_tx(tx: Transaction, ledger: LedgerState, params: ProtocolParams,
              broadcast_at: int) -> Optional[str]:
    """Why an honest voter would vote 0 on ``tx``, or None to vote 1.

    ``broadcast_at`` is when the transaction first appeared on the network;
    timestamps are judged against it.
    """
    err = tx_structure_error(tx)
    if err:
        return err
    if not timestamp_plausible(tx, broadcast_at, params.clock):
        return "implausible timestamp"
    return _ledger.tx_error(ledger, tx, params)


def cast_vote(record: VoterRecord, tx: Transaction, ledger: LedgerState,
              pending: Iterable[Transaction], prev_hash: Hash, now: int,
              keypair: KeyPair, params: ProtocolParams,
              broadcast_at: Optional[int] = None) -> Union[Vote, Abstain]:
    if record.status_at(now) != Status.ACTIVE:
        return Abstain.NOT_ACTIVE
    if tx.tsp <= record.registered_at:
        return Abstain.BEFORE_REGISTRATION
    if is_double_spent(tx, ledger, pending):
        return Abstain.DOUBLE_SPENT
    at = tx.tsp if broadcast_at is None else broadcast_at
    value = 1 if verify_tx(tx, ledger, params, at) is None else 0
    return make_vote(keypair, tx.id, prev_hash, value)


@dataclass
class RoundState:
    """One voting round for ``tx`` on top of the block hashed ``prev_hash``."""

    tx: Transaction
    prev_hash: Hash
    height: int
    start: int
    roster: list[NodeId]
    params: ProtocolParams
    received: VoteBoxSet = field(default_factory=VoteBoxSet)
    not_participated: list[NodeId] = field(default_factory=list)
    left: list[NodeId] = field(default_factory=list)
    cheaters: set[NodeId] = field(default_factory=set)
    rbox_sigs: dict[NodeId, bytes] = field(default_factory=dict)
    phase: Phase = Phase.COLLECTING
    completed_at: Optional[int] = None
    _rbox_msg: Optional[bytes] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.roster = sorted(set(self.roster))

    @property
    def deadline(self) -> int:
        return self.start + self.params.delta

    def _advance(self, phase: Phase) -> None:
        if phase < self.phase:
            raise RuntimeError("round phase cannot move backwards")
        self.phase = phase

    def add_vote(self, vote: Vote) -> str:
        """Record a vote; returns "ok" or the reason it was discarded."""
        if self.phase != Phase.COLLECTING:
            return "late"
        if vote.tx_id != self.tx.id:
            return "wrong-tx"
        if vote.prev_hash != self.prev_hash:
            return "wrong-prev-hash"
        if vote.voter not in self.roster:
            return "not-in-roster"
        if not vote.verifies():
            return "bad-signature"
        prior = self.received.get(vote.tx_id, vote.voter)
        if prior is not None:
            if prior.value != vote.value:
                self.cheaters.add(vote.voter)
                return "equivocation"
            return "duplicate"
        self.received.add(vote)
        return "ok"

    def missing(self) -> list[NodeId]:
        got = self.received.voters()
        return [n for n in self.roster if n not in got]

    def all_participated(self) -> bool:
        return not self.missing()

    def expire(self, now: int) -> list[NodeId]:
        """Remove roster members still silent at the inactivity deadline."""
        if self.phase != Phase.COLLECTING or now < self.deadline:
            return []
        gone = self.missing()
        self.not_participated.extend(gone)
        self.roster = [n for n in self.roster if n not in gone]
        return gone

    def drop_member(self, node: NodeId, reason: str = "left") -> None:
        if node in self.roster:
            self.roster.remove(node)
            self.received.discard(node)
            if reason == "left":
                self.left.append(node)

    def expel_cheaters(self) -> list[NodeId]:
        out = sorted(n for n in self.cheaters if n in self.roster)
        for n in out:
            self.drop_member(n, "cheater")
        return out

    def close_collection(self, now: int) -> bool:
        """Freeze the roster once everyone still listed has voted."""
        if self.phase == Phase.COLLECTING and self.all_participated():
            self.completed_at = now
            self._advance(Phase.SIGNING_ROSTER)
            return True
        return False

    def final_voters(self) -> tuple[NodeId, ...]:
        return tuple(self.roster)

    def rbox_message(self) -> bytes:
        if self.phase == Phase.COLLECTING:
            return rbox_message(self.tx.id, self.roster, self.prev_hash)
        if self._rbox_msg is None:  # the roster is frozen from here on
            self._rbox_msg = rbox_message(self.tx.id, self.roster, self.prev_hash)
        return self._rbox_msg

    def sign_roster(self, keypair: KeyPair) -> bytes:
        return sign_rbox(keypair, self.tx.id, self.roster, self.prev_hash)

    def add_rbox_signature(self, voter: NodeId, sig: bytes) -> bool:
        if self.phase != Phase.SIGNING_ROSTER or voter not in self.roster:
            return False
        if not verify(voter, self.rbox_message(), sig):
            return False
        self.rbox_sigs[voter] = sig
        if len(self.rbox_sigs) == len(self.roster):
            self._advance(Phase.TALLYING)
        return True

    @property
    def empty(self) -> bool:
        return not self.roster


def collect_votes(round_: RoundState, incoming: Iterable[tuple[int, object]]) -> RoundState:
    """Drive collection from a time-ordered stream of ``(time, message)``.

    Messages are votes or ``("leave", node)`` roster updates. The stream is
    consumed until every remaining roster member has voted; the inactivity
    deadline fires between messages when time passes it.
    """
    for when, msg in incoming:
        if round_.phase != Phase.COLLECTING:
            break
        if when >= round_.deadline:
            round_.expire(round_.deadline)
            if round_.close_collection(round_.deadline):
                break
        if isinstance(msg, Vote):
            round_.add_vote(msg)
        elif isinstance(msg, tuple) and msg and msg[0] == "leave":
            round_.drop_member(msg[1])
        round_.close_collection(when)
    if round_.phase == Phase.COLLECTING:
        round_.expire(round_.deadline)
        round_.close_collection(round_.deadline)
    return round_


@dataclass(frozen=True)
class Rejection:
    tx_id: Hash
    ones: int
    zeros: int
    voters: tuple[NodeId, ...]


def tally(round_: RoundState) -> RoundOutcome:
    votes = {v.voter: v.value for v in round_.received}
    return outcome_from_votes(round_.tx.id, votes, round_.cheaters)


def finalize_round(round_: RoundState) -> tuple[Union[Block, Rejection], RoundOutcome]:
    """Count votes and build the block (ones > zeros) or a rejection record."""
    if round_.phase != Phase.TALLYING:
        raise RuntimeError("round is not ready to tally")
    outcome = tally(round_)
    voters = round_.final_voters()
    votes = round_.received.sorted()
    round_._advance(Phase.DONE)
    if outcome.accepted:
        rbox = VoteRBox(round_.tx.id, voters, round_.prev_hash,
                        tuple(round_.rbox_sigs[v] for v in voters))
        return seal_block(round_.height, round_.prev_hash, round_.tx, votes, rbox), outcome
    ones = sum(v.value for v in votes)
    return Rejection(round_.tx.id, ones, len(votes) - ones, voters), outcome


def roster_for(tx: Transaction, ledger: LedgerState, now: int) -> list[NodeId]:
    """Voters obliged to vote on ``tx``: active now and registered before it was sent."""
    return [n for n in ledger.roster(now, registered_before=tx.tsp)
            if reinstate(ledger.voters[n], now).status_at(now) == Status.ACTIVE]


def outcome_to_json(outcome: RoundOutcome) -> dict:
    return {
        "tx": outcome.tx_id.hex(),
        "accepted": outcome.accepted,
        "tie": outcome.tie,
        "penalized": [n.hex() for n in outcome.penalized],
        "rewarded": [n.hex() for n in outcome.rewarded],
    }


__all__ = [
    "Abstain", "Phase", "Rejection", "RoundState", "cast_vote", "collect_votes",
    "finalize_round", "leave", "register", "reinstate", "roster_for", "tally",
    "verify_tx",
]
