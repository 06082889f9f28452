import dataclasses

import pytest

from zebris.harness import RunPlan, run_episode, run_plan
from zebris.invariants import (
    PostureStep,
    audited_trades,
    check_all,
    check_budget,
    check_posture_steps,
    check_prop1,
    check_prop2,
    posture_steps,
    read_audit_csv,
    read_posture_csv,
)
from zebris.market_model import ScenarioConfig


@pytest.fixture(scope="module")
def episode():
    return run_episode("ZEBRIS", ScenarioConfig(horizon=20, buyer_pool_size=20), 11, keep_rounds=True)


def test_clean_episode_has_no_violations(episode):
    trades = audited_trades(episode.round_results)
    assert trades
    steps = posture_steps(episode.ledger.history, episode.ledger.postures)
    res = check_all(trades, 0.4, steps)
    assert all(v == [] for v in res.values()), res


def test_off_midpoint_price_caught(episode):
    t = audited_trades(episode.round_results)[0]
    bad = dataclasses.replace(t, record=dataclasses.replace(t.record, price=t.record.price + 0.1))
    (rep,) = check_prop1([bad])
    assert rep.invariant == "prop1.split" and rep.round == t.round
    assert rep.trade == (t.buyer_id, t.seller_id)
    assert "prop1.split" in str(rep)


def test_non_positive_margin_caught(episode):
    t = audited_trades(episode.round_results)[0]
    bad = dataclasses.replace(t.record, margin=0.0, effective_valuation=t.record.effective_ask,
                              price=t.record.effective_ask)
    assert any(r.invariant == "prop1.margin" for r in check_prop1([bad]))


def test_uncapped_deposit_breaks_seller_floor(episode):
    r = audited_trades(episode.round_results)[0].record
    forfeited = r.margin  # a deposit far above the cap, fully forfeited
    bad = dataclasses.replace(r, deposit=forfeited, forfeited=forfeited, refunded=0.0, refund_ratio=0.0,
                              buyer_compensation=0.7 * forfeited, platform_cut=0.3 * forfeited,
                              seller_utility=r.price - r.effective_ask - forfeited,
                              buyer_utility=r.effective_valuation - r.price + 0.7 * forfeited)
    assert [x.invariant for x in check_prop2([bad], 0.4)] == ["prop2.seller_floor"]
    assert check_budget([bad]) == []


def test_subsidy_and_leak_caught(episode):
    r = audited_trades(episode.round_results)[0].record
    names = {x.invariant for x in check_budget([dataclasses.replace(r, platform_cut=-0.5)])}
    assert "budget.platform_revenue" in names and "budget.forfeit_split" in names
    names = {x.invariant for x in check_budget([dataclasses.replace(r, refunded=r.refunded + 0.01)])}
    assert "budget.deposit_split" in names


def test_posture_checks():
    good = PostureStep(0, 0, 0.5, 0.9, 0.62)
    assert check_posture_steps([good]) == []
    wrong_way = dataclasses.replace(good, next_posture=0.4)
    overshoot = dataclasses.replace(good, next_posture=0.95)
    stuck = dataclasses.replace(good, next_posture=0.5)
    drift = PostureStep(0, 0, 0.5, 0.5, 0.51)
    names = [r.invariant for s in (wrong_way, overshoot, stuck, drift) for r in check_posture_steps([s])]
    assert names.count("prop3.sign") == 3 and names.count("prop3.bounded") == 3
    static_ok = PostureStep(0, 0, 0.5, 0.9, 0.5, dynamic=False)
    assert check_posture_steps([static_ok]) == []
    static_bad = dataclasses.replace(static_ok, next_posture=0.6)
    assert [r.invariant for r in check_posture_steps([static_bad])] == ["posture.static"]


def test_type_guard():
    with pytest.raises(TypeError):
        check_prop1([1.0])


def test_audit_round_trip(tmp_path):
    plan = RunPlan(ScenarioConfig(horizon=8), mechanisms=("ZEBRIS", "ZEBRIS-S"), buyer_pool_sizes=(10,),
                   episodes_per_cell=2, output_dir=str(tmp_path))
    run_plan(plan)
    trades = read_audit_csv(tmp_path / "trades_audit.csv")
    steps = read_posture_csv(tmp_path / "postures.csv")
    assert {m for m, _ in trades} == {"ZEBRIS", "ZEBRIS-S"}
    assert any(not s.dynamic for m, s in steps if m == "ZEBRIS-S")
    res = check_all([t for _, t in trades], 0.4, [s for _, s in steps])
    assert all(v == [] for v in res.values())


def test_audit_reader_errors(tmp_path):
    with pytest.raises(OSError):
        read_audit_csv(tmp_path / "missing.csv")
    p = tmp_path / "bad.csv"
    p.write_text("mechanism,round\nZEBRIS,0\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_audit_csv(p)
