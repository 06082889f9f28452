import math

import pytest

from zebris.clearing import outcome_from, synthetic_pair
from zebris.market_model import MechanismConfig
from zebris.mechanisms import Trade
from zebris.metrics import aggregate_episodes, compute_round_metrics, episode_summary, stats, summary_rows
from zebris.settlement import ComplianceMeasurement, settle_trade

CLEAN = ComplianceMeasurement(20, 20, 20, 0, 0.4)


def trade(buyer_id, seller_id, margin, m=CLEAN):
    pair = synthetic_pair(buyer_id, seller_id, 1, 1, margin)
    rec = settle_trade(pair.evaluation, 1.0, m, 1.0, MechanismConfig(), deposit_enabled=False)
    return Trade(pair, 1.0, 1.0, 2.0, 1.0, m, rec)


def test_empty_round():
    r = compute_round_metrics(outcome_from((), {}), [], 5)
    assert r.social_welfare == 0.0 and r.accepted_trading_ratio == 0.0
    assert r.avg_delay is None and r.avg_privacy_cost is None
    assert r.avg_compliance is None and r.avg_seller_utility is None


def test_single_trade_welfare_and_seller_utility():
    t = trade(0, 0, 2.25)
    r = compute_round_metrics(outcome_from([t.pair], {0: (4, 4)}), [t], 1)
    assert r.social_welfare == pytest.approx(2.25)
    assert r.avg_seller_utility == pytest.approx(1.125)
    assert r.avg_compliance == pytest.approx(1.0)
    assert r.avg_delay == 0.4


def test_trading_ratio():
    ts = [trade(0, 0, 1.0), trade(1, 1, 1.0)]
    r = compute_round_metrics(outcome_from([t.pair for t in ts], {0: (4, 4), 1: (4, 4)}), ts, 5)
    assert r.accepted_trading_ratio == pytest.approx(0.4)


def test_misaligned_inputs():
    t = trade(0, 0, 1.0)
    with pytest.raises(RuntimeError):
        compute_round_metrics(outcome_from((), {}), [t], 1)


def test_episode_summary_skips_undefined_rounds():
    a = compute_round_metrics(outcome_from((), {}), [], 2)
    t = trade(0, 0, 2.0)
    b = compute_round_metrics(outcome_from([t.pair], {0: (4, 4)}), [t], 2)
    s = episode_summary([a, b])
    assert s["SW"] == pytest.approx(1.0)
    assert s["ACS"] == pytest.approx(1.0)


def test_stats_example():
    s = stats([10.0, 14.0])
    assert s.mean == 12.0
    assert s.sd == pytest.approx(math.sqrt(8))
    assert s.ci95 == pytest.approx(1.96 * math.sqrt(8) / math.sqrt(2))
    assert stats([None]).mean is None
    assert stats([3.0]).sd == 0.0


def test_aggregate_and_rows():
    table = aggregate_episodes({("ZEBRIS", 10): [{"SW": 1.0}, {"SW": 3.0}]})
    assert table[("ZEBRIS", 10)]["SW"].mean == 2.0
    assert table[("ZEBRIS", 10)]["ACS"].n == 0
    rows = summary_rows(table)
    assert {r["metric"] for r in rows} == {"SW", "ATR", "AED", "APRC", "ACS", "SU", "PR"}
    with pytest.raises(ValueError):
        aggregate_episodes({("ZEBRIS", 10): []})
