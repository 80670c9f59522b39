"""Transaction admission: priority points, the priority table, double-spend
detection and timestamp plausibility."""
from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

from .core import CoinId, Hash, NodeId, Transaction, TxKind
from .params import ClockParams


class ReplayError(ValueError):
    """A transaction id already present in the table."""


def priority_point(tx: Transaction, cur_ti: int, sender_ctr: int) -> int:
    """Waiting time since the transaction was sent plus the sender's CTR."""
    return (cur_ti - tx.tsp) + sender_ctr


def sort_key(priority: int, tx: Transaction) -> tuple:
    return (-priority, tx.tsp, tx.id)


@dataclass
class Row:
    tx: Transaction
    priority: int


class PriorityTable:
    """The txBox: pending transactions, highest priority point first.

    Ties go to the older timestamp, then the smaller transaction id.
    """

    def __init__(self) -> None:
        self._rows: list[Row] = []
        self._keys: list[tuple] = []
        self._ids: set[Hash] = set()
        self.cur_ti: Optional[int] = None

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self) -> Iterator[Row]:
        return iter(list(self._rows))

    def __contains__(self, tx_id: Hash) -> bool:
        return tx_id in self._ids

    def transactions(self) -> list[Transaction]:
        return [r.tx for r in self._rows]

    def resort(self, cur_ti: int, ctr_lookup: Callable[[NodeId], int]) -> None:
        """Recompute every row's priority at ``cur_ti`` and restore order."""
        for r in self._rows:
            r.priority = priority_point(r.tx, cur_ti, ctr_lookup(r.tx.sender))
        self._rows.sort(key=lambda r: sort_key(r.priority, r.tx))
        self._keys = [sort_key(r.priority, r.tx) for r in self._rows]
        self.cur_ti = cur_ti

    def insert(self, tx: Transaction, cur_ti: int, ctr_lookup: Callable[[NodeId], int]) -> None:
        if tx.id in self._ids:
            raise ReplayError(f"{tx.label()} already queued")
        if self.cur_ti != cur_ti:
            self.resort(cur_ti, ctr_lookup)
        row = Row(tx, priority_point(tx, cur_ti, ctr_lookup(tx.sender)))
        key = sort_key(row.priority, tx)
        i = bisect.bisect_left(self._keys, key)
        self._keys.insert(i, key)
        self._rows.insert(i, row)
        self._ids.add(tx.id)

    def head(self) -> Optional[Transaction]:
        """Top row, or None when there is nothing to vote on."""
        return self._rows[0].tx if self._rows else None

    def remove(self, tx_id: Hash) -> bool:
        if tx_id not in self._ids:
            return False
        i = next(i for i, r in enumerate(self._rows) if r.tx.id == tx_id)
        del self._rows[i]
        del self._keys[i]
        self._ids.discard(tx_id)
        return True


def insert_and_sort(table: PriorityTable, tx: Transaction, cur_ti: int,
                    ctr_lookup: Callable[[NodeId], int]) -> PriorityTable:
    table.insert(tx, cur_ti, ctr_lookup)
    table.resort(cur_ti, ctr_lookup)
    return table


def head(table: PriorityTable) -> Optional[Transaction]:
    return table.head()


def coin_conflicts(tx: Transaction, others: Iterable[Transaction]) -> list[Transaction]:
    """Other transactions that match ``tx`` on some coin and spending address."""
    coins = set(tx.coins)
    if not coins:
        return []
    return [o for o in others
            if o.id != tx.id and o.spender == tx.spender and coins.intersection(o.coins)]


def is_double_spent(tx: Transaction, ledger, pending: Iterable[Transaction]) -> bool:
    """Coin-and-address match against pending transactions, or a coin that the
    confirmed ledger shows as already consumed and not currently owned by the
    spender.

    A coin the spender merely does not own (never moved since minting) is not a
    double spend; that fails ordinary verification instead.
    """
    if tx.kind in (TxKind.LEAVE, TxKind.MINT):
        return False
    if coin_conflicts(tx, pending):
        return True
    return any(_consumed_elsewhere(ledger, c, tx.spender) for c in tx.coins)


def _consumed_elsewhere(ledger, coin: CoinId, spender: NodeId) -> bool:
    if coin in ledger.blocked or coin in ledger.locked_by:
        return True
    owner = ledger.coin_owner.get(coin)
    return owner != spender and coin in ledger.moved


def timestamp_plausible(tx: Transaction, cur_ti: int, clock: ClockParams) -> bool:
    """Reject timestamps older than the propagation bound or from the future."""
    return cur_ti - (clock.m + clock.slack) <= tx.tsp <= cur_ti + clock.slack
