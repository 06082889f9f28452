import pytest
from hypothesis import given, settings, strategies as st

from zebris.invariants import check_budget, check_prop1, check_prop2
from zebris.market_model import MechanismConfig, Package
from zebris.package_eval import PackageEvaluation
from zebris.settlement import (
    ComplianceMeasurement,
    capped_deposit,
    compliance_scores,
    midpoint_price,
    refund_ratio,
    settle_trade,
)


def evaluation(v_hat, a_hat, z=0.5):
    return PackageEvaluation(Package(2.0, 2.0, z), 4.0, 0.5, 0.7, 0.1, 0.3, v_hat, a_hat, v_hat - a_hat, True)


def measurement(auth=1.0, policy=1.0, delay=0.5, n=20):
    return ComplianceMeasurement(n, round(auth * n), n, round((1 - policy) * n), delay)


@pytest.mark.parametrize("v,a,p", [(10, 6, 8), (5, 5, 5), (8.2, 4.6, 6.4)])
def test_midpoint(v, a, p):
    assert midpoint_price(v, a) == pytest.approx(p)


def test_deposit_examples():
    cfg = MechanismConfig(deposit_verif_coeff=1.0, deposit_posture_coeff=1.0, deposit_cap_ratio=0.4)
    assert capped_deposit(0.5, 0.8, 4.0, cfg) == pytest.approx(0.7)
    assert capped_deposit(0.0, 1.0, 4.0, cfg) == 0.0
    # raw 5 against a cap of 1.2
    cfg = MechanismConfig(deposit_verif_coeff=5.0, deposit_posture_coeff=1.0, deposit_cap_ratio=0.4)
    assert capped_deposit(1.0, 1.0, 3.0, cfg) == pytest.approx(1.2)


def test_deposit_requires_positive_margin():
    with pytest.raises(ValueError):
        capped_deposit(0.5, 0.5, 0.0, MechanismConfig())


def test_score_guards():
    assert compliance_scores(ComplianceMeasurement(0, 0, 0, 0, 0.5), 1.0) == (0.0, 1.0, 1.0)
    assert compliance_scores(measurement(delay=0.9), 1.0)[2] == 1.0
    assert compliance_scores(measurement(delay=2.0), 1.0)[2] == 0.0
    assert compliance_scores(measurement(delay=3.0), 1.0)[2] == 0.0


def test_refund_ratio_examples():
    cfg = MechanismConfig()
    assert refund_ratio((1, 1, 1), cfg) == pytest.approx(1.0)
    assert refund_ratio((0, 0, 0), cfg) == 0.0
    assert refund_ratio((1, 0.5, 1), cfg) == pytest.approx(0.85)


def test_full_compliance_splits_margin_evenly():
    r = settle_trade(evaluation(8.0, 4.0), 0.6, measurement(), 1.0, MechanismConfig())
    assert r.refund_ratio == pytest.approx(1.0)
    assert r.forfeited == pytest.approx(0.0)
    assert r.buyer_utility == pytest.approx(2.0) and r.seller_utility == pytest.approx(2.0)


def test_settlement_chain():
    # no successful authentications and no violations give a refund ratio of 0.5
    m = ComplianceMeasurement(20, 0, 20, 0, 0.5)
    cfg = MechanismConfig(refund_weights=(0.5, 0.5, 0.0), compensation_share=0.7)
    r = settle_trade(evaluation(8.0, 4.0), 0.6, m, 1.0, cfg, deposit=0.7)
    assert r.refund_ratio == pytest.approx(0.5)
    assert r.forfeited == pytest.approx(0.35)
    assert r.buyer_compensation == pytest.approx(0.245)
    assert r.platform_cut == pytest.approx(0.105)
    assert r.seller_utility == pytest.approx(1.65)


def test_zero_compliance_keeps_seller_floor():
    cfg = MechanismConfig(deposit_cap_ratio=0.4)
    m = ComplianceMeasurement(20, 0, 20, 20, 5.0)
    r = settle_trade(evaluation(9.0, 4.0, z=0.9), 0.0, m, 1.0, cfg)
    assert r.refund_ratio == 0.0
    assert r.seller_utility >= (0.5 - 0.4) * r.margin > 0


def test_deposit_disabled():
    r = settle_trade(evaluation(8.0, 4.0), 0.2, measurement(auth=0.1), 1.0, MechanismConfig(),
                     deposit_enabled=False)
    assert r.deposit == 0.0 and r.platform_cut == 0.0


@st.composite
def trades(draw):
    a = draw(st.floats(0.1, 20))
    margin = draw(st.floats(1e-6, 20))
    n = draw(st.integers(1, 40))
    m = ComplianceMeasurement(n, draw(st.integers(0, n)), n, draw(st.integers(0, n)),
                              draw(st.floats(0.01, 10)))
    w1 = draw(st.floats(0, 1))
    w2 = draw(st.floats(0, 1 - w1))
    cfg = MechanismConfig(refund_weights=(w1, w2, 1.0 - w1 - w2),
                          deposit_cap_ratio=draw(st.floats(0.01, 0.49)),
                          compensation_share=draw(st.floats(0, 1)),
                          deposit_verif_coeff=draw(st.floats(0.01, 10)),
                          deposit_posture_coeff=draw(st.floats(0.01, 10)))
    ev = evaluation(a + margin, a, z=draw(st.floats(0, 1)))
    return settle_trade(ev, draw(st.floats(0, 1)), m, draw(st.floats(0.05, 5)), cfg), cfg


@settings(max_examples=300, deadline=None)
@given(trades())
def test_settlement_properties(item):
    r, cfg = item
    assert 0.0 <= r.refund_ratio <= 1.0
    assert 0.0 <= r.deposit <= cfg.deposit_cap_ratio * r.margin + 1e-12
    assert check_prop1([r]) == []
    assert check_prop2([r], cfg.deposit_cap_ratio) == []
    assert check_budget([r]) == []
