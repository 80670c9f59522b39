"""Scenario files: JSON documents describing one simulation run."""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from .params import ClockParams, ProtocolParams

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RDV scenario",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "key_seed": {"type": "string"},
        "coins_per_node": {"type": "integer", "minimum": 0},
        "voters": {
            "oneOf": [
                {"type": "integer", "minimum": 0},
                {"type": "array", "items": {"$ref": "#/$defs/voter"}},
            ]
        },
        "ordinary": {
            "oneOf": [
                {"type": "integer", "minimum": 0},
                {"type": "array", "items": {"$ref": "#/$defs/ordinary"}},
            ]
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta": {"type": "integer", "minimum": 1},
                "pi": {"type": "integer", "minimum": 1},
                "deposit": {"type": "integer", "minimum": 1},
                "penalty": {"type": "integer", "minimum": 0},
                "m": {"type": "integer", "minimum": 0},
                "slack": {"type": "integer", "minimum": 0},
            },
        },
        "delay": {
            "type": "object",
            "required": ["kind"],
            "properties": {"kind": {"enum": ["fixed", "uniform"]},
                           "value": {"type": "integer", "minimum": 0},
                           "min": {"type": "integer", "minimum": 0},
                           "max": {"type": "integer", "minimum": 0}},
            "if": {"properties": {"kind": {"const": "fixed"}}},
            "then": {"required": ["value"], "not": {"anyOf": [{"required": ["min"]},
                                                             {"required": ["max"]}]}},
            "else": {"required": ["min", "max"], "not": {"required": ["value"]}},
        },
        "gossip": {"type": "boolean"},
        "txs": {"type": "array", "items": {"$ref": "#/$defs/tx"}},
        "generator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["count"],
            "properties": {
                "count": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "start": {"type": "integer", "minimum": 1},
                "gap_min": {"type": "integer", "minimum": 0},
                "gap_max": {"type": "integer", "minimum": 0},
                "invalid_rate": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "duration": {"type": "integer", "minimum": 1},
        "adversaries": {"type": "array", "items": {"$ref": "#/$defs/adversary"}},
    },
    "$defs": {
        "voter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "coins": {"type": "integer", "minimum": 0},
                "debt": {"type": "boolean"},
                "strategy": {"enum": ["honest", "abstainer", "dissenter", "equivocator",
                                      "scripted"]},
                "silent_rounds": {"type": "integer", "minimum": 0},
                "flip_probability": {"type": "number", "minimum": 0, "maximum": 1},
                "votes": {"type": "array", "items": {"enum": [0, 1, "abstain"]}},
            },
        },
        "ordinary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "coins": {"type": "integer", "minimum": 0},
            },
        },
        "tx": {
            "type": "object",
            "additionalProperties": False,
            "required": ["at", "from", "to"],
            "properties": {
                "at": {"type": "integer", "minimum": 1},
                "from": {"type": "string"},
                "to": {"type": "string"},
                "kind": {"enum": ["transfer", "ctr_exchange", "register", "leave"]},
                "coins": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "count": {"type": "integer", "minimum": 0},
                "origin": {"type": "string"},
                "ctr_units": {"type": "integer", "minimum": 1},
                "countersign": {"type": "boolean"},
                "tsp": {"type": "integer"},
            },
        },
        "adversary": {
            "type": "object",
            "required": ["strategy", "node", "at"],
            "properties": {
                "strategy": {"enum": ["double_spender", "timestamp_forger"]},
                "node": {"type": "string"},
                "at": {"type": "integer", "minimum": 1},
                "coin": {"type": "integer", "minimum": 0},
                "stagger": {"type": "integer", "minimum": 0},
                "vendor": {"type": "string"},
                "collider": {"type": "string"},
                "backdate": {"type": "integer", "minimum": 0},
                "to": {"type": "string"},
            },
            "if": {"properties": {"strategy": {"const": "double_spender"}}},
            "then": {"required": ["vendor"], "propertyNames": {
                "enum": ["strategy", "node", "at", "coin", "stagger", "vendor", "collider"]}},
            "else": {"required": ["backdate", "to"], "propertyNames": {
                "enum": ["strategy", "node", "at", "coin", "backdate", "to"]}},
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending location."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        loc = f"{field}: " if field else ""
        super().__init__(f"{where}{loc}{message}")


@dataclass
class VoterSpec:
    name: str
    coins: int
    debt: bool = False
    strategy: str = "honest"
    silent_rounds: int = 1
    flip_probability: float = 1.0
    votes: tuple = ()


@dataclass
class NodeSpec:
    name: str
    coins: int


@dataclass
class TxSpec:
    at: int
    sender: str
    receiver: str
    kind: str = "transfer"
    coins: tuple[int, ...] = ()
    origin: Optional[str] = None
    ctr_units: Optional[int] = None
    countersign: bool = True
    tsp: Optional[int] = None
    tag: str = ""


@dataclass
class Delay:
    kind: str = "fixed"
    lo: int = 1
    hi: int = 1

    def draw(self, rng: random.Random) -> int:
        return self.lo if self.kind == "fixed" else rng.randint(self.lo, self.hi)


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    key_seed: str = "rdv"
    voters: list[VoterSpec] = field(default_factory=list)
    ordinary: list[NodeSpec] = field(default_factory=list)
    params: ProtocolParams = field(default_factory=ProtocolParams)
    delay: Delay = field(default_factory=Delay)
    gossip: bool = False
    txs: list[TxSpec] = field(default_factory=list)
    duration: int = 1_000_000
    adversaries: list[dict] = field(default_factory=list)

    def node_names(self) -> list[str]:
        return [v.name for v in self.voters] + [o.name for o in self.ordinary]

    def coins_of(self, name: str) -> int:
        for n in self.voters + self.ordinary:
            if n.name == name:
                return n.coins
        raise KeyError(name)

    def validate(self) -> "ScenarioConfig":
        names = self.node_names()
        if len(set(names)) != len(names):
            raise ScenarioError("duplicate node name", "voters/ordinary")
        if not self.voters:
            raise ScenarioError("at least one voter is required", "voters")
        if self.delay.kind == "uniform" and self.delay.lo > self.delay.hi:
            raise ScenarioError("min exceeds max", "delay")
        if self.delay.hi > self.params.clock.m:
            raise ScenarioError(
                f"maximum delay {self.delay.hi} exceeds propagation bound m={self.params.clock.m}",
                "delay")
        if any(v.strategy == "equivocator" for v in self.voters) and not self.gossip:
            # without vote relaying honest nodes would tally different boxes
            raise ScenarioError("equivocating voters require gossip", "gossip")
        if self.gossip and self.params.delta <= 2 * self.params.clock.m + 1:
            raise ScenarioError("with gossip, delta must exceed 2m + 1", "params.delta")
        for i, t in enumerate(self.txs):
            loc = f"txs[{i}]"
            for who in (t.sender, t.receiver):
                if who not in names:
                    raise ScenarioError(f"unknown node {who!r}", loc)
            origin = t.origin or (t.receiver if t.kind == "ctr_exchange" else t.sender)
            if origin not in names:
                raise ScenarioError(f"unknown node {origin!r}", f"{loc}.origin")
            if any(c >= self.coins_of(origin) for c in t.coins):
                raise ScenarioError(f"{origin} has only {self.coins_of(origin)} genesis coins",
                                    f"{loc}.coins")
            if t.kind == "ctr_exchange" and not t.ctr_units:
                raise ScenarioError("ctr_exchange needs ctr_units", f"{loc}.ctr_units")
            if t.kind not in ("leave",) and not t.coins:
                raise ScenarioError("transaction spends no coins", f"{loc}.coins")
            if t.at >= self.duration:
                raise ScenarioError("scheduled after the end of the run", f"{loc}.at")
        for i, a in enumerate(self.adversaries):
            loc = f"adversaries[{i}]"
            for key in ("node", "vendor", "collider", "to"):
                if key in a and a[key] not in names:
                    raise ScenarioError(f"unknown node {a[key]!r}", f"{loc}.{key}")
            coin = a.get("coin", 0)
            if coin >= self.coins_of(a["node"]):
                raise ScenarioError("adversary owns no such genesis coin", f"{loc}.coin")
        return self


def _voters(raw, default_coins: int) -> list[VoterSpec]:
    if isinstance(raw, int):
        return [VoterSpec(f"v{i}", default_coins) for i in range(raw)]
    out = []
    for i, v in enumerate(raw):
        out.append(VoterSpec(
            name=v.get("name", f"v{i}"),
            coins=v.get("coins", default_coins),
            debt=v.get("debt", False),
            strategy=v.get("strategy", "honest"),
            silent_rounds=v.get("silent_rounds", 1),
            flip_probability=v.get("flip_probability", 1.0),
            votes=tuple(v.get("votes", ())),
        ))
    return out


def _ordinary(raw, default_coins: int) -> list[NodeSpec]:
    if isinstance(raw, int):
        return [NodeSpec(f"o{i}", default_coins) for i in range(raw)]
    return [NodeSpec(o.get("name", f"o{i}"), o.get("coins", default_coins))
            for i, o in enumerate(raw)]


def generate_txs(cfg: ScenarioConfig, gen: dict) -> list[TxSpec]:
    """Random transfers, each spending unused genesis coins of its sender."""
    rng = random.Random(gen.get("seed", 0))
    names = cfg.node_names()
    reserved = {v.name: cfg.params.deposit for v in cfg.voters if not v.debt}
    free = {n: list(range(reserved.get(n, 0), cfg.coins_of(n))) for n in names}
    t = gen.get("start", 1)
    lo, hi = gen.get("gap_min", 1), gen.get("gap_max", 10)
    out = []
    for _ in range(gen["count"]):
        t += rng.randint(lo, hi)
        senders = [n for n in names if free[n]]
        if not senders or t >= cfg.duration:
            break
        s = rng.choice(senders)
        r = rng.choice([n for n in names if n != s] or [s])
        k = min(len(free[s]), rng.randint(1, 2))
        if rng.random() < gen.get("invalid_rate", 0.0):
            # spend coins the sender never owned: voters answer 0
            victim = rng.choice([n for n in names if n != s and cfg.coins_of(n)] or [s])
            out.append(TxSpec(t, s, r, coins=(rng.randrange(cfg.coins_of(victim)),),
                              origin=victim, tag="invalid"))
            continue
        coins = tuple(free[s][:k])
        del free[s][:k]
        out.append(TxSpec(t, s, r, coins=coins))
    return out


def from_dict(doc: dict) -> ScenarioConfig:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(e.message, path) from None
    default_coins = doc.get("coins_per_node", 10)
    p = doc.get("params", {})
    try:
        params = ProtocolParams(
            delta=p.get("delta", 20), pi=p.get("pi", 50), deposit=p.get("deposit", 4),
            penalty=p.get("penalty", 0),
            clock=ClockParams(p.get("m", 5), p.get("slack", 0)))
    except ValueError as e:
        raise ScenarioError(str(e), "params") from None
    d = doc.get("delay", {"kind": "fixed", "value": 1})
    delay = (Delay("fixed", d["value"], d["value"]) if d["kind"] == "fixed"
             else Delay("uniform", d["min"], d["max"]))
    cfg = ScenarioConfig(
        name=doc.get("name", "scenario"),
        seed=doc.get("seed", 0),
        key_seed=doc.get("key_seed", "rdv"),
        voters=_voters(doc.get("voters", 3), default_coins),
        ordinary=_ordinary(doc.get("ordinary", 0), default_coins),
        params=params,
        delay=delay,
        gossip=doc.get("gossip", False),
        duration=doc.get("duration", 1_000_000),
        adversaries=list(doc.get("adversaries", [])),
    )
    for t in doc.get("txs", []):
        coins = tuple(t.get("coins", ()))
        if not coins and "count" in t:
            coins = tuple(range(t["count"]))
        cfg.txs.append(TxSpec(
            at=t["at"], sender=t["from"], receiver=t["to"], kind=t.get("kind", "transfer"),
            coins=coins, origin=t.get("origin"), ctr_units=t.get("ctr_units"),
            countersign=t.get("countersign", True), tsp=t.get("tsp")))
    if "generator" in doc:
        cfg.txs.extend(generate_txs(cfg, doc["generator"]))
    cfg.txs.sort(key=lambda t: t.at)
    return cfg.validate()


def load(path: Union[str, Path]) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(e.msg, f"column {e.colno}", line=e.lineno) from None
    try:
        return from_dict(doc)
    except ScenarioError as e:
        if e.line is None and e.field:
            raise ScenarioError(str(e), line=_line_of(text, e.field)) from None
        raise


def _line_of(text: str, path: str) -> Optional[int]:
    """Best-effort line of a ``a/b/0/c`` or ``a[0].c`` location in JSON text."""
    pos, found = 0, None
    for part in re.split(r"[/.\[\]]+", path):
        if not part or part.isdigit():
            continue
        i = text.find(f'"{part}"', pos)
        if i < 0:
            break
        pos = found = i
    return None if found is None else text.count("\n", 0, found) + 1
