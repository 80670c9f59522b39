"""Deterministic discrete-event simulation of an RDV network.

Time is integer ticks on one shared timeline. Every honest node runs the same
round schedule: a round for the head transaction opens at a tick ``S`` known
to all nodes, votes land by ``S + m``, silent voters are removed at
``S + delta`` and the next round opens once every node has certainly seen the
roster signatures. A transaction is only considered for selection after
``broadcast + m`` has passed, so all honest nodes select from the same table.
"""
from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Union

from .core import (
    Allocation, Block, Chain, ForkError, Hash, KeyPair, NodeId, Transaction, TxKind,
    Vote, countersign, make_genesis, make_mint, make_transaction, make_vote,
    minted_coins,
)
from . import ledger as L
from .ledger import LedgerState, RoundOutcome, Status
from .params import ProtocolParams
from .priority import PriorityTable, coin_conflicts, is_double_spent
from .scenario import ScenarioConfig, TxSpec
from .voter import Phase, Rejection, RoundState, finalize_round, roster_for, verify_tx

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# wire messages

@dataclass(frozen=True)
class TxBroadcast:
    tx: Transaction


@dataclass(frozen=True)
class RegisterAnnounce:
    tx: Transaction


@dataclass(frozen=True)
class LeaveAnnounce:
    tx: Transaction


@dataclass(frozen=True)
class VoteBroadcast:
    vote: Vote


@dataclass(frozen=True)
class VoteRBoxSignature:
    tx_id: Hash
    voters: tuple[NodeId, ...]
    prev_hash: Hash
    signer: NodeId
    signature: bytes


Message = Union[TxBroadcast, RegisterAnnounce, LeaveAnnounce, VoteBroadcast, VoteRBoxSignature]


def announce(tx: Transaction) -> Message:
    if tx.kind == TxKind.REGISTER:
        return RegisterAnnounce(tx)
    if tx.kind == TxKind.LEAVE:
        return LeaveAnnounce(tx)
    return TxBroadcast(tx)


@dataclass(order=True)
class SimEvent:
    deliver_at: int
    seq: int
    recipient: int = field(compare=False)
    payload: object = field(compare=False)
    sent_at: int = field(compare=False, default=0)


# --------------------------------------------------------------------------
# vote policies (adversary strategies on the voting side)

ABSTAIN = "abstain"
EQUIVOCATE = "equivocate"


class VotePolicy:
    """Maps (round index for this voter, honest verdict) to what gets sent."""

    honest = True

    def decide(self, index: int, verdict: int):
        return verdict


class Abstainer(VotePolicy):
    honest = False

    def __init__(self, silent_rounds: int):
        self.silent_rounds = silent_rounds

    def decide(self, index, verdict):
        return ABSTAIN if index < self.silent_rounds else verdict


class Dissenter(VotePolicy):
    honest = False

    def __init__(self, flip_probability: float, rng: random.Random):
        self.p = flip_probability
        self.rng = rng

    def decide(self, index, verdict):
        return 1 - verdict if self.rng.random() < self.p else verdict


class Equivocator(VotePolicy):
    honest = False

    def decide(self, index, verdict):
        return EQUIVOCATE


class Scripted(VotePolicy):
    honest = False

    def __init__(self, votes):
        self.votes = list(votes)

    def decide(self, index, verdict):
        return self.votes[index] if index < len(self.votes) else verdict


def strategy_abstainer(silent_rounds: int) -> VotePolicy:
    return Abstainer(silent_rounds)


def strategy_dissenter(flip_probability: float, rng: random.Random) -> VotePolicy:
    return Dissenter(flip_probability, rng)


# --------------------------------------------------------------------------
# transaction-side adversaries

@dataclass
class Send:
    at: int
    sender: str
    tx_builder: Callable[["Node"], Transaction]
    attack: Optional[int] = None
    label: str = ""


def strategy_double_spender(ctx: "World", node: str, vendor: str, at: int, stagger: int = 0,
                            collider: Optional[str] = None, coin: int = 0,
                            attack: int = 0) -> list[Send]:
    """Two transfers of the same coin: one to the vendor, one to a collider."""
    collider = collider or node
    coin_id = ctx.genesis_coin(node, coin)
    vendor_id, collider_id = ctx.ids[vendor], ctx.ids[collider]

    def build(receiver):
        return lambda n: make_transaction(n.keypair, receiver, (coin_id,), n.clock,
                                          n.settled_ctr(n.clock))

    return [Send(at, node, build(vendor_id), attack, "tx_v"),
            Send(at + stagger, node, build(collider_id), attack, "tx_a")]


def strategy_timestamp_forger(ctx: "World", node: str, to: str, at: int, backdate: int,
                              coin: int = 0) -> list[Send]:
    """A transfer whose timestamp claims it was made ``backdate`` ticks ago."""
    coin_id = ctx.genesis_coin(node, coin)
    to_id = ctx.ids[to]
    return [Send(at, node, lambda n: make_transaction(n.keypair, to_id, (coin_id,),
                                                      n.clock - backdate,
                                                      n.settled_ctr(n.clock)),
                 label=f"forged:{backdate}")]


# --------------------------------------------------------------------------
# metrics

@dataclass
class Metrics:
    latency: dict[str, int] = field(default_factory=dict)
    rounds_completed: int = 0
    blocks: int = 0
    rejections: int = 0
    aborted_rounds: int = 0
    delta_removals: int = 0
    pi_reinstatements: int = 0
    penalties_applied: int = 0
    ctr_awarded: int = 0
    double_spends_attempted: int = 0
    double_spends_detected: int = 0
    double_spends_confirmed: int = 0
    double_spent_txs_flagged: int = 0
    tie_rounds: int = 0
    equivocations: int = 0
    bad_signatures: int = 0
    replays: int = 0
    dropped_no_voters: int = 0
    forks: int = 0
    conservation_failures: int = 0
    chain_length: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        return dict(self.__dict__)


# --------------------------------------------------------------------------
# nodes

class Node:
    def __init__(self, world: "World", index: int, name: str, keypair: KeyPair,
                 policy: Optional[VotePolicy], honest: bool):
        self.world = world
        self.index = index
        self.name = name
        self.keypair = keypair
        self.id = keypair.node_id
        self.policy = policy
        self.honest = honest
        p = world.params
        self.params: ProtocolParams = p
        self.chain = Chain(world.genesis)
        self.ledger: LedgerState = L.genesis_state(world.genesis, p)
        self.table = PriorityTable()
        self.staged: dict[Hash, Transaction] = {}
        self.broadcast_at: dict[Hash, int] = {}
        self.seen: set[Hash] = set()
        self.round: Optional[RoundState] = None
        self.next_round_at = 1
        self.vote_buffer: dict[tuple[Hash, Hash], list[Vote]] = {}
        self.sig_buffer: dict[tuple[Hash, Hash], list[VoteRBoxSignature]] = {}
        self.relayed: set[bytes] = set()
        self.my_rounds = 0
        self.rosters: dict[int, tuple[NodeId, ...]] = {}
        self.outcomes: list[tuple[Optional[int], RoundOutcome]] = []
        self.flagged: list[Hash] = []
        self.ctr_history: list[tuple[int, int]] = [(0, 0)]
        self.scheduled_ticks: set[int] = set()

    @property
    def clock(self) -> int:
        return self.world.now

    def emit(self, ev: str, **fields) -> None:
        self.world.record(self.name, ev, **fields)

    def settled_ctr(self, t: int) -> int:
        """Own CTR as of rounds every node had certainly finished by ``t``."""
        value = 0
        for settle, ctr in self.ctr_history:
            if settle <= t:
                value = ctr
        return value

    # -- scheduling --------------------------------------------------------
    def schedule_tick(self, at: int) -> None:
        at = max(at, self.next_round_at)
        if at not in self.scheduled_ticks:
            self.scheduled_ticks.add(at)
            self.world.timer(at, self.index, ("tick", at))

    def eligible_at(self, tx_id: Hash) -> int:
        return self.broadcast_at[tx_id] + self.params.clock.m + 1

    # -- handlers ----------------------------------------------------------
    def on_message(self, msg, sent_at: int) -> None:
        if isinstance(msg, (TxBroadcast, RegisterAnnounce, LeaveAnnounce)):
            self.on_tx(msg.tx, sent_at)
        elif isinstance(msg, VoteBroadcast):
            self.on_vote(msg.vote)
        elif isinstance(msg, VoteRBoxSignature):
            self.on_rbox_sig(msg)

    def on_timer(self, payload) -> None:
        kind = payload[0]
        if kind == "tick":
            self.scheduled_ticks.discard(payload[1])
            self.on_tick()
        elif kind == "deadline":
            self.on_deadline(payload[1])
        elif kind == "evidence":
            if self.round is not None and self.round.start == payload[1]:
                self.try_close()
        elif kind == "reinstate":
            self.on_reinstate(payload[1], payload[2])

    def on_tx(self, tx: Transaction, sent_at: int) -> None:
        if tx.id in self.seen:
            self.world.metric(self, "replays")
            return
        self.seen.add(tx.id)
        self.broadcast_at[tx.id] = sent_at
        self.staged[tx.id] = tx
        if self.round is None:
            self.schedule_tick(self.eligible_at(tx.id))

    def promote(self) -> None:
        now = self.clock
        ready = [t for t in self.staged.values() if self.eligible_at(t.id) <= now]
        for tx in sorted(ready, key=lambda t: t.id):
            del self.staged[tx.id]
            self.table.insert(tx, now, self.ledger.ctr_of)

    def on_tick(self) -> None:
        now = self.clock
        if self.round is not None or now < self.next_round_at:
            return
        self.promote()
        while True:
            self.table.resort(now, self.ledger.ctr_of)
            tx = self.table.head()
            if tx is None:
                if self.staged:
                    self.schedule_tick(min(self.eligible_at(i) for i in self.staged))
                return
            pending = self.table.transactions()
            if is_double_spent(tx, self.ledger, pending):
                group = [tx] + coin_conflicts(tx, pending)
                for t in group:
                    self.table.remove(t.id)
                    self.flagged.append(t.id)
                self.emit("double_spent", txs=[t.id.hex() for t in group])
                self.world.flag_double_spend(self, group)
                continue
            roster = roster_for(tx, self.ledger, now)
            if not roster:
                waiting = [r.suspended_until for r in self.ledger.voters.values()
                           if r.status_at(now) == Status.SUSPENDED]
                if any(r.status_at(now) == Status.ACTIVE for r in self.ledger.voters.values()):
                    # every active voter registered after this tx was sent
                    self.table.remove(tx.id)
                    self.emit("no_voters", tx=tx.id.hex())
                    self.world.metric(self, "dropped_no_voters")
                    continue
                if waiting:
                    self.schedule_tick(min(waiting))
                return
            self.open_round(tx, roster)
            return

    def open_round(self, tx: Transaction, roster: list[NodeId]) -> None:
        now = self.clock
        tip = self.chain.tip
        self.round = RoundState(tx, tip.block_hash, tip.height + 1, now, roster, self.params)
        self.emit("round_start", tx=tx.id.hex(), height=tip.height + 1,
                  roster=[self.world.names[n] for n in self.round.roster])
        self.world.timer(self.round.deadline, self.index, ("deadline", now))
        if self.world.gossip:
            self.world.timer(now + 2 * self.params.clock.m + 1, self.index, ("evidence", now))
        if self.id in self.round.roster:
            self.cast(tx)
        for vote in self.vote_buffer.pop((tx.id, tip.block_hash), []):
            self.accept_vote(vote)
        self.try_close()

    def cast(self, tx: Transaction) -> None:
        verdict_reason = verify_tx(tx, self.ledger, self.params, self.broadcast_at[tx.id])
        verdict = 1 if verdict_reason is None else 0
        index = self.my_rounds
        self.my_rounds += 1
        choice = self.policy.decide(index, verdict) if self.policy else verdict
        prev = self.round.prev_hash
        if choice == ABSTAIN:
            self.emit("abstain", tx=tx.id.hex())
            return
        if choice == EQUIVOCATE:
            one, zero = make_vote(self.keypair, tx.id, prev, 1), make_vote(self.keypair, tx.id, prev, 0)
            half = len(self.world.nodes) // 2
            for i in range(len(self.world.nodes)):
                self.world.send(self.index, i, VoteBroadcast(one if i < half else zero))
            self.emit("equivocate", tx=tx.id.hex())
            return
        vote = make_vote(self.keypair, tx.id, prev, int(choice))
        self.emit("vote", tx=tx.id.hex(), value=vote.value,
                  reason=verdict_reason or "ok")
        self.world.broadcast(self.index, VoteBroadcast(vote))

    def on_vote(self, vote: Vote) -> None:
        if self.world.gossip:
            key = vote.signature
            if key not in self.relayed:
                self.relayed.add(key)
                self.world.broadcast(self.index, VoteBroadcast(vote), include_self=False)
        r = self.round
        if r is not None and vote.tx_id == r.tx.id and vote.prev_hash == r.prev_hash:
            self.accept_vote(vote)
            self.try_close()
        elif vote.prev_hash == self.chain.tip.block_hash or vote.prev_hash not in self._past_hashes():
            self.vote_buffer.setdefault((vote.tx_id, vote.prev_hash), []).append(vote)

    def _past_hashes(self) -> set[Hash]:
        return set(self.chain.hashes()[:-1])

    def accept_vote(self, vote: Vote) -> None:
        known = vote.voter in self.round.cheaters
        status = self.round.add_vote(vote)
        if status == "bad-signature":
            self.world.metric(self, "bad_signatures")
            self.emit("bad_vote", voter=self.world.names.get(vote.voter, vote.voter.hex()[:8]))
        elif status == "equivocation" and not known:
            self.world.metric(self, "equivocations")
            self.emit("equivocation", voter=self.world.names[vote.voter])

    def on_deadline(self, start: int) -> None:
        r = self.round
        if r is None or r.start != start:
            return
        gone = r.expire(self.clock)
        until = self.clock + self.params.pi
        for n in gone:
            self.ledger = L.suspend(self.ledger, n, until)
            self.world.timer(until, self.index, ("reinstate", n, until))
            self.emit("removed", voter=self.world.names[n], tx=r.tx.id.hex(), until=until)
            self.world.metric(self, "delta_removals")
        self.try_close()

    def on_reinstate(self, node: NodeId, until: int) -> None:
        rec = self.ledger.voters.get(node)
        if rec is None or rec.status == Status.LEFT or rec.suspended_until != until:
            return
        self.ledger = self.ledger.copy()
        self.ledger.voters[node] = replace(rec, suspended_until=None)
        self.emit("reinstated", voter=self.world.names[node])
        self.world.metric(self, "pi_reinstatements")

    def try_close(self) -> None:
        r = self.round
        if r is None or r.phase != Phase.COLLECTING:
            return
        now = self.clock
        if self.world.gossip:
            if now < r.start + 2 * self.params.clock.m + 1:
                return
            for n in r.expel_cheaters():
                self.emit("expelled", voter=self.world.names[n])
        if not r.close_collection(now):
            return
        if r.empty:
            self.abort_round()
            return
        if self.id in r.roster and self._will_sign():
            sig = r.sign_roster(self.keypair)
            self.world.broadcast(self.index, VoteRBoxSignature(
                r.tx.id, r.final_voters(), r.prev_hash, self.id, sig))
        for msg in self.sig_buffer.pop((r.tx.id, r.prev_hash), []):
            self._apply_sig(msg)
        self.maybe_finalize()

    def _will_sign(self) -> bool:
        return True

    def on_rbox_sig(self, msg: VoteRBoxSignature) -> None:
        r = self.round
        if r is not None and r.phase == Phase.SIGNING_ROSTER and msg.tx_id == r.tx.id \
                and msg.prev_hash == r.prev_hash:
            self._apply_sig(msg)
            self.maybe_finalize()
        else:
            self.sig_buffer.setdefault((msg.tx_id, msg.prev_hash), []).append(msg)

    def _apply_sig(self, msg: VoteRBoxSignature) -> None:
        r = self.round
        if tuple(msg.voters) != r.final_voters():
            return
        r.add_rbox_signature(msg.signer, msg.signature)

    def abort_round(self) -> None:
        r = self.round
        self.emit("round_abort", tx=r.tx.id.hex(), state="state_n")
        self.world.metric(self, "aborted_rounds")
        self.round = None
        self.next_round_at = r.start + self.params.delta + 1
        self.schedule_tick(self.next_round_at)

    def maybe_finalize(self) -> None:
        r = self.round
        if r is None or r.phase != Phase.TALLYING:
            return
        removed = bool(r.not_participated)
        result, outcome = finalize_round(r)
        self.ledger = L.note_participation(self.ledger, r.final_voters(), r.start)
        if isinstance(result, Block):
            try:
                self.chain.append(result)
            except ForkError:
                self.world.metric(self, "forks")
                raise
            err = L.tx_error(self.ledger, r.tx, self.params)
            if err:
                self.emit("invalid_confirmed", tx=r.tx.id.hex(), reason=err)
            self.ledger = L.apply_block(self.ledger, result, outcome, self.params, strict=False)
            self.rosters[result.height] = r.final_voters()
            self.outcomes.append((result.height, outcome))
            self.world.metric(self, "blocks")
            self.world.confirmed(self, r.tx)
        else:
            self.ledger = L.apply_rejection(self.ledger, outcome, self.params)
            self.outcomes.append((None, outcome))
            self.world.metric(self, "rejections")
        if not L.conservation_holds(self.ledger):
            self.world.metric(self, "conservation_failures")
        self.world.metric(self, "rounds_completed")
        self.world.metric(self, "penalties_applied", len(outcome.penalized))
        self.world.metric(self, "ctr_awarded", len(outcome.rewarded))
        if outcome.tie:
            self.world.metric(self, "tie_rounds")
        self.emit("round_end", tx=r.tx.id.hex(), accepted=outcome.accepted, tie=outcome.tie,
                  voters=[self.world.names[n] for n in r.final_voters()],
                  penalized=[self.world.names[n] for n in outcome.penalized],
                  rewarded=[self.world.names[n] for n in outcome.rewarded])
        self.table.remove(r.tx.id)
        self.round = None
        m = self.params.clock.m
        if removed:
            gap = self.params.delta + m + 1
        elif self.world.gossip:
            gap = 3 * m + 2
        else:
            gap = 2 * m + 1
        self.next_round_at = r.start + gap
        self.ctr_history.append((self.next_round_at, self.ledger.ctr_of(self.id)))
        self.schedule_tick(self.next_round_at)


# --------------------------------------------------------------------------
# world

@dataclass
class SimResult:
    config: ScenarioConfig
    chains: dict[str, Chain]
    ledgers: dict[str, LedgerState]
    final_ledger: LedgerState
    metrics: Metrics
    events: list[dict]
    rosters: dict[int, tuple[NodeId, ...]]
    outcomes: list[tuple[Optional[int], RoundOutcome]]
    honest: list[str]
    ids: dict[str, NodeId]
    attacks: dict[int, list[Hash]]
    labels: list[str]
    reference: str

    def event_log(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def tip_hashes(self) -> dict[str, str]:
        return {n: c.tip.block_hash.hex() for n, c in self.chains.items()}


class World:
    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.rng = random.Random(self.seed)
        self.params = cfg.params
        self.gossip = cfg.gossip
        self.now = 0
        self.queue: list[SimEvent] = []
        self.seq = 0
        self.events: list[dict] = []
        self.metrics = Metrics()

        names = cfg.node_names()
        self.keys = {n: KeyPair.from_seed(f"{cfg.key_seed}:{n}") for n in names}
        self.ids = {n: k.node_id for n, k in self.keys.items()}
        self.names = {v: k for k, v in self.ids.items()}
        allocs = [Allocation(self.ids[v.name], v.coins, True, v.debt) for v in cfg.voters]
        allocs += [Allocation(self.ids[o.name], o.coins) for o in cfg.ordinary]
        self.genesis = make_genesis(make_mint(allocs, 0))
        self._minted = minted_coins(self.genesis.tx)

        adversarial = {a["node"] for a in cfg.adversaries}
        self.nodes: list[Node] = []
        for i, name in enumerate(names):
            spec = next((v for v in cfg.voters if v.name == name), None)
            policy = self._policy(spec) if spec is not None else None
            honest = (policy is None or policy.honest) and name not in adversarial
            self.nodes.append(Node(self, i, name, self.keys[name], policy, honest))
        self.honest = [n for n in self.nodes if n.honest]
        self.dishonest = {n.id for n in self.nodes if not n.honest}
        self.reference = self.honest[0] if self.honest else self.nodes[0]

        self.attacks: dict[int, list[Hash]] = {}
        self.attack_of: dict[Hash, int] = {}
        self.detected: set[int] = set()
        self.sent_at: dict[Hash, int] = {}
        self.labels: list[str] = []
        self.assumption_violated = False

        sends = [Send(t.at, t.sender, self._builder(t)) for t in cfg.txs]
        for k, a in enumerate(cfg.adversaries):
            if a["strategy"] == "double_spender":
                sends += strategy_double_spender(self, a["node"], a["vendor"], a["at"],
                                                 a.get("stagger", 0), a.get("collider"),
                                                 a.get("coin", 0), attack=k)
                self.attacks[k] = []
            elif a["strategy"] == "timestamp_forger":
                sends += strategy_timestamp_forger(self, a["node"], a["to"], a["at"],
                                                   a["backdate"], a.get("coin", 0))
        for s in sorted(sends, key=lambda s: s.at):
            self.timer(s.at, names.index(s.sender), ("send", s))

    def _policy(self, spec) -> Optional[VotePolicy]:
        rng = random.Random(f"{self.seed}:{spec.name}")
        return {
            "honest": lambda: None,
            "abstainer": lambda: strategy_abstainer(spec.silent_rounds),
            "dissenter": lambda: strategy_dissenter(spec.flip_probability, rng),
            "equivocator": lambda: Equivocator(),
            "scripted": lambda: Scripted(spec.votes),
        }[spec.strategy]()

    def genesis_coin(self, name: str, index: int):
        return self._minted[self.ids[name]][index]

    def _builder(self, t: TxSpec):
        receiver = self.ids[t.receiver]
        origin = t.origin or (t.receiver if t.kind == "ctr_exchange" else t.sender)
        coins = tuple(self.genesis_coin(origin, i) for i in t.coins)
        kind = {"transfer": TxKind.TRANSFER, "ctr_exchange": TxKind.CTR_EXCHANGE,
                "register": TxKind.REGISTER, "leave": TxKind.LEAVE}[t.kind]

        def build(node: Node) -> Transaction:
            tsp = node.clock if t.tsp is None else t.tsp
            tx = make_transaction(node.keypair, receiver, coins, tsp,
                                  node.settled_ctr(node.clock), kind, t.ctr_units)
            if kind == TxKind.CTR_EXCHANGE and t.countersign:
                tx = countersign(tx, self.keys[t.receiver])
            return tx

        return build

    # -- event plumbing ---------------------------------------------------
    def _push(self, at: int, recipient: int, payload, sent_at: int) -> None:
        self.seq += 1
        heapq.heappush(self.queue, SimEvent(at, self.seq, recipient, payload, sent_at))

    def timer(self, at: int, node: int, payload) -> None:
        self._push(at, node, ("timer", payload), self.now)

    def send(self, src: int, dst: int, msg) -> None:
        delay = 0 if src == dst else self.cfg.delay.draw(self.rng)
        self._push(self.now + delay, dst, ("msg", msg), self.now)

    def broadcast(self, src: int, msg, include_self: bool = True) -> None:
        for i in range(len(self.nodes)):
            if i != src or include_self:
                self.send(src, i, msg)

    def record(self, node: str, ev: str, **fields) -> None:
        self.events.append({"t": self.now, "node": node, "ev": ev, **fields})

    def metric(self, node: Node, name: str, amount: int = 1) -> None:
        if node is self.reference:
            setattr(self.metrics, name, getattr(self.metrics, name) + amount)

    def flag_double_spend(self, node: Node, group: list[Transaction]) -> None:
        if node is not self.reference:
            return
        self.metrics.double_spent_txs_flagged += len(group)
        for tx in group:
            if tx.id in self.attack_of:
                self.detected.add(self.attack_of[tx.id])

    def confirmed(self, node: Node, tx: Transaction) -> None:
        if node is self.reference and tx.id in self.sent_at:
            self.metrics.latency[tx.id.hex()] = self.now - tx.tsp

    def _do_send(self, node: Node, send: Send) -> None:
        tx = send.tx_builder(node)
        self.sent_at[tx.id] = self.now
        if send.attack is not None:
            self.attacks[send.attack].append(tx.id)
            self.attack_of[tx.id] = send.attack
        node.emit("send", tx=tx.id.hex(), kind=tx.kind.name.lower(), tsp=tx.tsp,
                  to=self.names.get(tx.receiver, "?"), label=send.label)
        self.broadcast(node.index, announce(tx))

    # -- main loop ---------------------------------------------------------
    def run(self) -> SimResult:
        while self.queue:
            ev = heapq.heappop(self.queue)
            if ev.deliver_at > self.cfg.duration:
                break
            self.now = ev.deliver_at
            node = self.nodes[ev.recipient]
            kind, payload = ev.payload
            if kind == "msg":
                node.on_message(payload, ev.sent_at)
            elif payload[0] == "send":
                self._do_send(node, payload[1])
            else:
                node.on_timer(payload)
            self._check_assumption(node)
        return self._result()

    def _check_assumption(self, node: Node) -> None:
        r = node.round
        if node is not self.reference or r is None:
            return
        bad = sum(1 for n in r.roster if n in self.dishonest)
        if r.roster and bad * 2 >= len(r.roster):
            self.assumption_violated = True

    def _result(self) -> SimResult:
        from .audit import confirmed_conflicts

        ref = self.reference
        m = self.metrics
        m.chain_length = {n.name: len(n.chain) for n in self.nodes}
        m.double_spends_attempted = len(self.attacks)
        m.double_spends_detected = len(self.detected)
        m.double_spends_confirmed = len(confirmed_conflicts(ref.chain))
        m.forks += fork_count([n.chain for n in self.honest])
        labels = ["assumption-violated"] if self.assumption_violated else []
        return SimResult(
            config=self.cfg,
            chains={n.name: n.chain for n in self.nodes},
            ledgers={n.name: n.ledger for n in self.nodes},
            final_ledger=ref.ledger,
            metrics=m,
            events=self.events,
            rosters=dict(ref.rosters),
            outcomes=list(ref.outcomes),
            honest=[n.name for n in self.honest],
            ids=dict(self.ids),
            attacks=dict(self.attacks),
            labels=labels,
            reference=ref.name,
        )


def fork_count(chains: Iterable[Chain]) -> int:
    """Heights at which two chains hold different blocks."""
    by_height: dict[int, set[Hash]] = {}
    for c in chains:
        for b in c:
            by_height.setdefault(b.height, set()).add(b.block_hash)
    return sum(1 for hs in by_height.values() if len(hs) > 1)


def run(cfg: ScenarioConfig, seed: Optional[int] = None) -> SimResult:
    """Execute one scenario; identical (config, seed) give identical results."""
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return World(cfg).run()


# --------------------------------------------------------------------------
# exhaustive single-transaction enumeration

@dataclass(frozen=True)
class StateRow:
    behaviors: tuple
    state: str
    observed_state: str
    observed: "object"
    expected: "object"

    @property
    def ok(self) -> bool:
        return self.observed == self.expected and self.observed_state == self.state


def _observe(result: SimResult, n: int, params: ProtocolParams):
    from .reference import RoundResult

    index = {result.ids[f"v{i}"]: i for i in range(n)}
    ref = result.reference
    chain = result.chains[ref]
    ledger = result.final_ledger
    removed, roster = [], ()
    for e in result.events:
        if e["node"] != ref:
            continue
        if e["ev"] == "removed":
            removed.append(int(e["voter"][1:]))
        elif e["ev"] == "round_end":
            roster = tuple(sorted(int(v[1:]) for v in e["voters"]))
        elif e["ev"] == "round_abort":
            roster = ()
    penalized = tuple(sorted(index[nd] for nd, r in ledger.voters.items()
                             if nd in index and r.penalties == params.penalty))
    rewarded = tuple(sorted(index[nd] for nd in index if ledger.ctr_of(nd) == 1))
    k = len(removed)
    if not roster:
        state = "state_n"
    elif k:
        state = f"state_{k + 2}"
    else:
        state = "state_2" if penalized else "state_1"
    return RoundResult(len(chain) > 1, roster, tuple(sorted(removed)), penalized,
                       rewarded, state)


def enumerate_correctness_states(n: int, seed: int = 0) -> list[StateRow]:
    """Run every combination of {vote 1, vote 0, stay silent} for ``n`` voters.

    One ordinary node sends one valid transfer; voters follow a one-entry
    script. Each row pairs the simulated outcome with the reference oracle.
    """
    import itertools
    from .reference import BEHAVIORS, interpret
    from .scenario import from_dict

    if not 1 <= n <= 4:
        raise ValueError("n must be between 1 and 4")
    rows = []
    for combo in itertools.product(BEHAVIORS, repeat=n):
        doc = {
            "name": f"states-{n}", "seed": seed,
            "voters": [{"name": f"v{i}", "strategy": "scripted", "votes": [b]}
                       for i, b in enumerate(combo)],
            "ordinary": [{"name": "o", "coins": 5}],
            "params": {"m": 2, "delta": 8, "pi": 1000, "deposit": 4},
            "delay": {"kind": "uniform", "min": 1, "max": 2},
            "txs": [{"at": 1, "from": "o", "to": "v0", "coins": [0]}],
            "duration": 200,
        }
        cfg = from_dict(doc)
        result = run(cfg)
        observed = _observe(result, n, cfg.params)
        expected = interpret(combo)
        rows.append(StateRow(combo, expected.state, observed.state, observed, expected))
    return rows
