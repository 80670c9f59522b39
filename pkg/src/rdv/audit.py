"""Post-run checks computed from the artifacts alone (chains, ledgers, logs)."""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

from .core import Block, CoinId, NodeId, TxKind, minted_coins, verify_chain
from .ledger import balance_of, conservation_holds


def confirmed_conflicts(chain: Sequence[Block]) -> list[tuple[int, CoinId]]:
    """(height, coin) for every confirmed spend of a coin its spender did not hold.

    Ownership is replayed from the genesis mint using only what is on chain,
    so two confirmed spends of one coin by the same holder show up here.
    """
    blocks = list(chain)
    if not blocks:
        return []
    owner: dict[CoinId, NodeId] = {}
    for node, coins in minted_coins(blocks[0].tx).items():
        for c in coins:
            owner[c] = node
    locked: dict[NodeId, set[CoinId]] = {}
    out = []
    for b in blocks[1:]:
        tx = b.tx
        if tx.kind == TxKind.LEAVE:
            locked.pop(tx.sender, None)
            continue
        spender = tx.spender
        held_locked = locked.get(spender, set())
        for c in tx.coins:
            if owner.get(c) != spender or c in held_locked:
                out.append((b.height, c))
        if tx.kind == TxKind.REGISTER:
            locked.setdefault(spender, set()).update(tx.coins)
        elif tx.kind == TxKind.TRANSFER:
            for c in tx.coins:
                owner[c] = tx.receiver
        elif tx.kind == TxKind.CTR_EXCHANGE:
            for c in tx.coins:
                owner[c] = tx.sender
    return out


def divergent(chains: dict[str, Sequence[Block]]) -> list[str]:
    """Names whose chain differs from the most common one."""
    keys = {n: tuple(b.block_hash for b in c) for n, c in chains.items()}
    if not keys:
        return []
    common, _ = Counter(keys.values()).most_common(1)[0]
    return sorted(n for n, k in keys.items() if k != common)


def honest_agreement(result) -> bool:
    return not divergent({n: result.chains[n] for n in result.honest})


def scan_log(events: Iterable[dict], node: str) -> dict[str, int]:
    """Recount per-node counters from the event log."""
    counts = Counter()
    for e in events:
        if e["node"] != node:
            continue
        ev = e["ev"]
        if ev == "round_end":
            counts["rounds_completed"] += 1
            counts["blocks" if e["accepted"] else "rejections"] += 1
            counts["tie_rounds"] += bool(e["tie"])
            counts["penalties_applied"] += len(e["penalized"])
            counts["ctr_awarded"] += len(e["rewarded"])
        elif ev == "removed":
            counts["delta_removals"] += 1
        elif ev == "reinstated":
            counts["pi_reinstatements"] += 1
        elif ev == "double_spent":
            counts["double_spent_txs_flagged"] += len(e["txs"])
        elif ev == "round_abort":
            counts["aborted_rounds"] += 1
        elif ev == "equivocation":
            counts["equivocations"] += 1
    return dict(counts)


def log_mismatches(result) -> dict[str, tuple[int, int]]:
    """Counters where the reported metric disagrees with the log recount."""
    recount = scan_log(result.events, result.reference)
    metrics = result.metrics.to_json()
    return {k: (metrics[k], v) for k, v in recount.items() if metrics[k] != v} | {
        k: (metrics[k], 0) for k in (
            "rounds_completed", "delta_removals", "pi_reinstatements", "tie_rounds",
            "double_spent_txs_flagged", "equivocations", "penalties_applied", "ctr_awarded")
        if k not in recount and metrics[k] != 0}


SAFETY_CHECKS = ("honest_agreement", "no_confirmed_double_spend")


def report(result) -> dict:
    """Machine-readable summary; the CLI prints its human form from this."""
    ref_chain = result.chains[result.reference]
    violation = verify_chain(list(ref_chain), result.rosters or None, subset=True)
    ledger = result.final_ledger
    checks = {
        "honest_agreement": honest_agreement(result),
        "chain_valid": violation is None,
        "no_confirmed_double_spend": not confirmed_conflicts(ref_chain),
        "conservation": all(conservation_holds(result.ledgers[n]) for n in result.honest),
        "log_matches_metrics": not log_mismatches(result),
    }
    # safety is only promised while each roster keeps an honest majority
    waived = SAFETY_CHECKS if "assumption-violated" in result.labels else ()
    names = {v: k for k, v in result.ids.items()}
    return {
        "scenario": result.config.name,
        "seed": result.config.seed,
        "reference_node": result.reference,
        "labels": list(result.labels),
        "checks": checks,
        "ok": all(v for k, v in checks.items() if k not in waived),
        "violation": None if violation is None else
            {"height": violation[0], "check": violation[1].check, "detail": violation[1].detail},
        "tip": ref_chain.tip.block_hash.hex(),
        "tips": result.tip_hashes(),
        "height": ref_chain.tip.height,
        "metrics": result.metrics.to_json(),
        "balances": {names[n]: balance_of(ledger, n) for n in sorted(result.ids.values())
                     if n in names},
        "voters": {names[n]: {"status": r.status.value, "deposit": r.deposit,
                              "penalties": r.penalties}
                   for n, r in sorted(ledger.voters.items())},
    }


def summary_lines(rep: dict) -> list[str]:
    m = rep["metrics"]
    lines = [
        f"{'PASS' if rep['ok'] else 'FAIL'} scenario {rep['scenario']} seed {rep['seed']}: "
        f"height {rep['height']} tip {rep['tip'][:16]}",
        f"rounds {m['rounds_completed']} (blocks {m['blocks']}, rejected {m['rejections']}, "
        f"ties {m['tie_rounds']}), removals {m['delta_removals']}, "
        f"reinstatements {m['pi_reinstatements']}",
        f"double-spends attempted: {m['double_spends_attempted']}, detected: "
        f"{m['double_spends_detected']}, confirmed: {m['double_spends_confirmed']}",
    ]
    for k, ok in rep["checks"].items():
        lines.append(f"  {'ok  ' if ok else 'FAIL'} {k}")
    for label in rep["labels"]:
        lines.append(f"  note: {label}")
    return lines
