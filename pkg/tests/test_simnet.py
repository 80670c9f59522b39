from pathlib import Path

import pytest

from rdv.audit import confirmed_conflicts, honest_agreement, log_mismatches, report
from rdv.scenario import from_dict, load
from rdv.simnet import enumerate_correctness_states, run

SCEN = Path(__file__).parent.parent / "scenarios"
P = {"m": 3, "delta": 10, "pi": 30, "deposit": 4}


def names(result, key, ev):
    return [e for e in result.events if e["node"] == result.reference and e["ev"] == ev]


def test_honest3_five_blocks():
    r = run(load(SCEN / "honest3.json"))
    assert {len(c) for c in r.chains.values()} == {6}
    assert len({c.tip.block_hash for c in r.chains.values()}) == 1
    assert report(r)["ok"]


def test_same_seed_same_log():
    cfg = load(SCEN / "dissenter.json")
    a, b = run(cfg, 7), run(cfg, 7)
    assert a.event_log() == b.event_log()
    assert a.tip_hashes() == b.tip_hashes()
    assert a.final_ledger.snapshot() == b.final_ledger.snapshot()


def test_different_seeds_same_chain():
    cfg = from_dict({"voters": 5, "params": P, "delay": {"kind": "uniform", "min": 0, "max": 3},
                     "generator": {"count": 15, "seed": 1}})
    a, b = run(cfg, 1), run(cfg, 2)
    assert a.event_log() != b.event_log()      # arrival orders differ
    assert a.tip_hashes() == b.tip_hashes()


def ds(stagger, node="v4", voters=5, collider="v1"):
    adv = [{"strategy": "double_spender", "node": node, "at": 5, "stagger": stagger,
            "vendor": "v0", "collider": collider, "coin": 6}]
    return from_dict({"voters": voters, "params": P,
                      "delay": {"kind": "uniform", "min": 1, "max": 3}, "adversaries": adv})


@pytest.mark.parametrize("stagger", [0, 1, 4, 9, 15, 30])
def test_double_spend_never_confirmed(stagger):
    r = run(ds(stagger))
    assert not confirmed_conflicts(r.chains[r.reference])
    m = r.metrics
    assert m.double_spends_attempted == m.double_spends_detected == 1
    assert m.double_spends_confirmed == 0
    spent = [b.tx.id for b in r.chains[r.reference]][1:]
    assert sum(t in spent for t in r.attacks[0]) <= 1
    assert honest_agreement(r) and not r.labels


def test_simultaneous_pair_both_dropped():
    r = run(ds(0))
    assert len(r.chains[r.reference]) == 1
    assert r.metrics.double_spent_txs_flagged == 2


def test_sole_voter_adversary_is_labelled():
    r = run(ds(0, node="v0", voters=1, collider="v0"))
    assert "assumption-violated" in r.labels


def test_forger_m_plus_ten_rejected():
    cfg = from_dict({"voters": 3, "params": P, "ordinary": [{"name": "f", "coins": 1}],
                     "adversaries": [{"strategy": "timestamp_forger", "node": "f", "at": 40,
                                      "backdate": 13, "to": "v0", "coin": 0}]})
    r = run(cfg)
    assert len(r.chains[r.reference]) == 1
    assert r.metrics.rejections == 1
    votes = [e for e in r.events if e["ev"] == "vote"]
    assert votes and all(e["value"] == 0 and e["reason"] == "implausible timestamp" for e in votes)


def test_abstainer_removed_and_reinstated():
    r = run(load(SCEN / "abstainer.json"))
    start = names(r, None, "round_start")[0]["t"]
    rem = names(r, None, "removed")
    rein = names(r, None, "reinstated")
    assert [e["t"] for e in rem] == [start + 10]
    assert [e["t"] for e in rein] == [start + 10 + 30]
    assert r.metrics.delta_removals == 1 and r.metrics.pi_reinstatements == 1
    # back on the roster for the later transaction
    assert "lazy" in names(r, None, "round_start")[1]["roster"]


def test_abstainer_with_nothing_pending_is_kept():
    cfg = from_dict({"voters": [{"name": "lazy", "strategy": "abstainer", "silent_rounds": 99},
                                {"name": "b"}, {"name": "c"}],
                     "params": P, "duration": 500})
    r = run(cfg)
    assert r.metrics.delta_removals == 0
    assert r.final_ledger.voters[r.ids["lazy"]].suspended_until is None


def test_full_dissenter_is_demoted():
    r = run(load(SCEN / "dissenter.json"))
    x = r.final_ledger.voters[r.ids["x"]]
    assert x.status.value == "left" and x.penalties == 4
    assert r.metrics.blocks == 8


def test_dissenter_minority_cannot_block():
    cfg = from_dict({"voters": [{"name": "x", "strategy": "dissenter"},
                                {"name": "y", "strategy": "dissenter"},
                                {"name": "b"}, {"name": "c"}, {"name": "d"}],
                     "params": {**P, "deposit": 8, "penalty": 1},
                     "generator": {"count": 6, "seed": 5}})
    r = run(cfg)
    assert r.metrics.blocks == len(cfg.txs) and r.metrics.rejections == 0


def test_equivocator_expelled_and_penalized():
    r = run(load(SCEN / "equivocator.json"))
    q = r.ids["two_face"]
    assert r.final_ledger.voters[q].penalties == 2
    assert r.metrics.equivocations == 2
    assert honest_agreement(r)


def test_bootstrap_voter_reaches_full_deposit():
    r = run(load(SCEN / "bootstrap.json"))
    rec = r.final_ledger.voters[r.ids["newcomer"]]
    assert rec.deposit == 4 and rec.owed_deposit == 0
    assert r.metrics.blocks == 3


def test_register_and_leave_on_chain():
    r = run(load(SCEN / "churn.json"))
    led = r.final_ledger
    assert led.voters[r.ids["joiner"]].status.value == "active"
    assert led.voters[r.ids["v2"]].status.value == "left"
    last_round = names(r, None, "round_start")[-1]
    assert "joiner" in last_round["roster"] and "v2" not in last_round["roster"]


def test_ctr_exchange_scenario():
    r = run(load(SCEN / "ctr_exchange.json"))
    led = r.final_ledger
    assert led.ctr_of(r.ids["buyer"]) == 2
    assert led.ctr_of(r.ids["v2"]) == 1       # earned 3, sold 2


def test_metrics_agree_with_log():
    for p in sorted(SCEN.glob("*.json")):
        r = run(load(p))
        assert not log_mismatches(r), p.name


@pytest.mark.parametrize("combo, state, block", [
    ((1, 1, 1), "state_1", True),
    ((1, 1, "abstain"), "state_3", True),
    (("abstain",) * 3, "state_n", False),
])
def test_state_examples(combo, state, block):
    rows = {r.behaviors: r for r in enumerate_correctness_states(3)}
    row = rows[combo]
    assert row.ok and row.state == state and row.observed.block == block


def test_states_n1():
    rows = enumerate_correctness_states(1)
    assert len(rows) == 3
    assert {r.behaviors[0]: r.state for r in rows} == {1: "state_1", 0: "state_1",
                                                       "abstain": "state_n"}
    with pytest.raises(ValueError):
        enumerate_correctness_states(5)
