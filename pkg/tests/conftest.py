import numpy as np
import pytest

from zebris.market_model import BuyerRequest, MechanismConfig, ScenarioConfig, SellerState


def make_buyer(buyer_id=0, **kw):
    base = dict(data_size=0.5, workload=0.5, deadline=0.9, privacy_sensitivity=0.5,
                min_security=0.5, valuation=12.0, delay_penalty=4.0, privacy_penalty=3.0)
    base.update(kw)
    return BuyerRequest(buyer_id, **base)


def make_seller(seller_id=0, **kw):
    base = dict(bandwidth=8.0, compute=24.0, posture=0.8, verification_levels=(0.0, 0.45, 0.9),
                base_ask=3.0, unit_bandwidth_cost=0.1, unit_compute_cost=0.15)
    base.update(kw)
    return SellerState(seller_id, **base)


@pytest.fixture
def cfg():
    return MechanismConfig()


@pytest.fixture
def small_scenario():
    return ScenarioConfig(horizon=20, buyer_pool_size=10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_TITLES = {
    1: "settlement and posture guarantees over 50 default episodes",
    2: "DP equals brute force on 500 on-grid instances",
    3: "DP welfare dominates ask-first greedy on every round",
    4: "ZEBRIS welfare trend and lead over baselines",
    5: "ZEBRIS best ACS/AED/APRC, ResOnly highest ATR",
    6: "ZEBRIS ACS >= ZEBRIS-S ACS with paired seeds",
    7: "clearing time linear in buyers",
    8: "identical plans give byte-identical summaries",
}


def pytest_terminal_summary(terminalreporter):
    ran = [r for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])
           if "test_acceptance.py" in getattr(r, "nodeid", "")]
    if not ran:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        ok, detail = ACCEPTANCE.get(n, (False, "not evaluated (test errored or was deselected)"))
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {title}: {detail}")
