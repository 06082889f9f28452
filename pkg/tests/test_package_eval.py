import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zebris.market_model import (
    ChannelState,
    MechanismConfig,
    Package,
    ScenarioConfig,
    enumerate_candidates,
    init_sellers,
    sample_round,
)
from zebris.package_eval import (
    DomainError,
    EvaluationView,
    best_feasible_package,
    compliance_score,
    evaluate_package,
    evaluate_round,
    privacy_risk,
    service_delay,
    transmission_rate,
    zt_cost,
)

from conftest import make_buyer, make_seller


@pytest.mark.parametrize("b,sinr,rate", [(2.0, 3.0, 4.0), (4.0, 15.0, 16.0)])
def test_rate(b, sinr, rate):
    assert transmission_rate(Package(b, 1.0, 0.5), sinr) == pytest.approx(rate)


def test_rate_domain():
    with pytest.raises(DomainError):
        transmission_rate(Package(2.0, 1.0, 0.5), 0.0)


def test_delay_hand_evaluation():
    cfg = MechanismConfig(delay_verif_coeff=0.1, delay_posture_coeff=0.2)
    buyer = make_buyer(data_size=0.5, workload=0.5)
    # log2(1 + 3) = 2 so bandwidth 4 gives 8 Mbit/s
    d = service_delay(buyer, make_seller(posture=1.0), Package(4.0, 2.0, 0.5), 3.0, cfg)
    assert d == pytest.approx(0.5 + 0.25 + 0.05 + 0.0)


def test_delay_security_terms():
    cfg = MechanismConfig(delay_verif_coeff=0.1, delay_posture_coeff=0.2)
    buyer = make_buyer(data_size=0.5, workload=0.5)
    base = service_delay(buyer, make_seller(posture=1.0), Package(4.0, 2.0, 0.0), 3.0, cfg)
    assert base == pytest.approx(0.75)
    worst = service_delay(buyer, make_seller(posture=0.0), Package(4.0, 2.0, 0.0), 3.0, cfg)
    assert worst - base == pytest.approx(0.2)


def test_compliance_examples():
    assert compliance_score(0.7, 0.7, MechanismConfig(compliance_weight=0.3)) == pytest.approx(0.7)
    assert compliance_score(0.4, 0.9, MechanismConfig(compliance_weight=1.0)) == pytest.approx(0.4)
    assert compliance_score(0.6, 0.8, MechanismConfig(compliance_weight=0.5)) == pytest.approx(0.7)


def test_privacy_risk_examples():
    b = make_buyer(privacy_sensitivity=0.8)
    assert privacy_risk(b, 1.0, 0.3) == 0.0
    assert privacy_risk(b, 0.2, 1.0) == 0.0
    assert privacy_risk(b, 0.5, 0.5) == pytest.approx(0.2)


def test_zt_cost_examples():
    assert zt_cost(0.0, 1.0, MechanismConfig()) == 0.0
    assert zt_cost(0.5, 1.0, MechanismConfig(zt_verif_cost=2.0)) == pytest.approx(1.0)
    assert zt_cost(0.0, 0.6, MechanismConfig(zt_posture_cost=1.0)) == pytest.approx(0.4)


def test_valuation_and_ask_hand_evaluation():
    # delay 0.8 as in the delay example; posture 1 removes the risk term
    cfg = MechanismConfig(delay_verif_coeff=0.1, delay_posture_coeff=0.2, zt_verif_cost=1.6,
                          zt_posture_cost=1.0)
    buyer = make_buyer(data_size=0.5, workload=0.5, valuation=12.0, delay_penalty=4.0,
                       privacy_penalty=3.0, privacy_sensitivity=0.4, deadline=2.0, min_security=0.0)
    seller = make_seller(posture=1.0, base_ask=3.0, unit_bandwidth_cost=0.1, unit_compute_cost=0.2)
    ev = evaluate_package(buyer, seller, Package(4.0, 2.0, 0.5), 3.0, cfg)
    assert ev.delay == pytest.approx(0.8)
    assert ev.privacy_risk == 0.0  # q = 1
    assert ev.effective_valuation == pytest.approx(12 - 3.2)
    assert ev.zt_cost == pytest.approx(0.8)
    assert ev.effective_ask == pytest.approx(4.6)
    assert ev.margin == pytest.approx(ev.effective_valuation - ev.effective_ask)


def test_valuation_with_privacy_term():
    # v_hat = 12 - 4*0.8 - 3*0.2 = 8.2 with xi = 0.8 * 0.5 * 0.5
    cfg = MechanismConfig(delay_verif_coeff=0.1, delay_posture_coeff=0.2)
    buyer = make_buyer(data_size=0.5, workload=0.5, privacy_sensitivity=0.8, deadline=2.0, min_security=0.0)
    seller = make_seller(posture=0.5)
    ev = evaluate_package(buyer, seller, Package(4.0, 2.0, 0.5), 3.0, cfg)
    assert ev.privacy_risk == pytest.approx(0.2)
    assert ev.delay == pytest.approx(0.5 + 0.25 + 0.05 + 0.1)
    assert ev.effective_valuation == pytest.approx(12 - 4 * ev.delay - 0.6)


def _grid(buyer, seller, sc=ScenarioConfig()):
    return enumerate_candidates(buyer, seller, sc)


def test_no_feasible_package():
    buyer = make_buyer(deadline=0.01)
    assert best_feasible_package(buyer, make_seller(), _grid(buyer, make_seller()), 10.0, MechanismConfig()) is None


def test_single_feasible_returned_whatever_its_margin():
    buyer = make_buyer(valuation=0.1, deadline=5.0, min_security=0.0)
    seller = make_seller()
    ev = best_feasible_package(buyer, seller, [Package(8.0, 24.0, 0.9)], 10.0, MechanismConfig())
    assert ev is not None and ev.margin < 0


def test_best_is_exhaustive_argmax():
    buyer, seller = make_buyer(), make_seller()
    cands = _grid(buyer, seller)
    cfg = MechanismConfig()
    best = best_feasible_package(buyer, seller, cands, 20.0, cfg)
    evs = [evaluate_package(buyer, seller, p, 20.0, cfg) for p in cands]
    assert best.margin == max(e.margin for e in evs if e.feasible)


NO_PENALTIES = EvaluationView(use_delay_penalty=False, use_privacy_penalty=False)


def test_two_feasible_margins_picks_larger():
    buyer = make_buyer(valuation=3.25, deadline=10.0, min_security=0.0)
    seller = make_seller(base_ask=0.5, unit_bandwidth_cost=0.125, unit_compute_cost=0.125, posture=1.0)
    cfg = MechanismConfig(zt_verif_cost=1.0)
    lo, hi = Package(2.0, 2.0, 0.75), Package(2.0, 2.0, 0.0)
    margins = [evaluate_package(buyer, seller, p, 10.0, cfg, NO_PENALTIES).margin for p in (lo, hi)]
    assert margins == pytest.approx([1.5, 2.25])
    got = best_feasible_package(buyer, seller, [lo, hi], 10.0, cfg, NO_PENALTIES)
    assert got.package == hi


def test_tie_goes_to_smaller_package():
    buyer = make_buyer(deadline=10.0, min_security=0.0)
    # without the zero-trust cost the verification level does not move the margin
    view = EvaluationView(use_delay_penalty=False, use_privacy_penalty=False, use_zt_cost=False)
    cands = [Package(2.0, 2.0, 0.9), Package(2.0, 2.0, 0.45), Package(2.0, 2.0, 0.0)]
    got = best_feasible_package(buyer, make_seller(), cands, 10.0, MechanismConfig(), view)
    assert got.package == Package(2.0, 2.0, 0.0)


def test_view_switches_terms_off():
    buyer, seller = make_buyer(min_security=0.99), make_seller(posture=0.5)
    pkg = Package(4.0, 12.0, 0.0)
    full = evaluate_package(buyer, seller, pkg, 10.0, MechanismConfig())
    bare = evaluate_package(buyer, seller, pkg, 10.0, MechanismConfig(),
                            EvaluationView(False, False, False, False))
    assert not full.feasible and bare.feasible
    assert bare.effective_valuation == buyer.valuation
    assert bare.effective_ask == pytest.approx(full.effective_ask - full.zt_cost)


def _round(seed, **kw):
    sc = ScenarioConfig(buyer_pool_size=12, activation_prob=1.0, **kw)
    rng = np.random.default_rng(seed)
    prof = init_sellers(sc, rng)
    return sc, sample_round(sc, rng, 0, prof, [p.initial_posture for p in prof])


VIEWS = [EvaluationView(), EvaluationView(False, True, True, True),
         EvaluationView(True, True, False, False), EvaluationView(False, False, False, False, False)]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), view=st.sampled_from(VIEWS))
def test_vectorised_round_matches_scalar_scan(seed, view):
    sc, r = _round(seed)
    cfg = sc.mechanism
    got = evaluate_round(r.buyers, r.sellers, r.channel, sc, cfg, view)
    expect = []
    for b in r.buyers:
        for s in r.sellers:
            best = best_feasible_package(b, s, enumerate_candidates(b, s, sc), r.channel.of(b.buyer_id, s.seller_id),
                                         cfg, view)
            if best is not None:
                expect.append((b.buyer_id, s.seller_id, best))
    assert [(c.buyer_id, c.seller_id) for c in got] == [(b, s) for b, s, _ in expect]
    for c, (_, _, e) in zip(got, expect):
        assert c.evaluation.package == e.package
        assert c.evaluation.margin == pytest.approx(e.margin, abs=1e-12)
        assert c.evaluation.delay == pytest.approx(e.delay, abs=1e-12)
        assert c.reference.package == e.package
        buyer = next(b for b in r.buyers if b.buyer_id == c.buyer_id)
        seller = next(s for s in r.sellers if s.seller_id == c.seller_id)
        full = evaluate_package(buyer, seller, e.package, r.channel.of(c.buyer_id, c.seller_id), cfg)
        assert c.reference.margin == pytest.approx(full.margin, abs=1e-12)


def test_empty_round():
    sc = ScenarioConfig()
    assert evaluate_round([], [make_seller()], ChannelState(np.ones((1, 1))), sc, sc.mechanism) == []
