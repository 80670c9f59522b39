"""A deliberately naive single-round interpreter used as a test oracle.

It knows nothing about messages, clocks or signatures: given what each voter
does with one transaction it states what the round must produce. Nothing here
imports the voting or ledger modules.
"""
from __future__ import annotations

from dataclasses import dataclass

VOTE_1, VOTE_0, ABSTAIN = 1, 0, "abstain"
BEHAVIORS = (VOTE_1, VOTE_0, ABSTAIN)


@dataclass(frozen=True)
class RoundResult:
    block: bool
    roster: tuple[int, ...]       # voter indices left in the final roster
    removed: tuple[int, ...]
    penalized: tuple[int, ...]
    rewarded: tuple[int, ...]
    state: str


def classify(behaviors) -> str:
    n = len(behaviors)
    silent = sum(1 for b in behaviors if b == ABSTAIN)
    if silent == n:
        return "state_n"
    if silent:
        return f"state_{silent + 2}"
    return "state_1" if len(set(behaviors)) == 1 else "state_2"


def interpret(behaviors) -> RoundResult:
    removed = tuple(i for i, b in enumerate(behaviors) if b == ABSTAIN)
    roster = tuple(i for i, b in enumerate(behaviors) if b != ABSTAIN)
    ones = [i for i in roster if behaviors[i] == VOTE_1]
    zeros = [i for i in roster if behaviors[i] == VOTE_0]
    if not roster:
        return RoundResult(False, (), removed, (), (), "state_n")
    if len(ones) > len(zeros):
        win, lose = ones, zeros
    else:
        win, lose = zeros, ones
    return RoundResult(len(ones) > len(zeros), roster, removed, tuple(lose), tuple(win),
                       classify(behaviors))
