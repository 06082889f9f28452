"""Midpoint pricing, capped deposits, compliance scoring and money flows."""

from __future__ import annotations

from dataclasses import dataclass

from .market_model import MechanismConfig
from .package_eval import PackageEvaluation


@dataclass(frozen=True)
class ComplianceMeasurement:
    auth_requested: int
    auth_succeeded: int
    checks: int
    violations: int
    realized_delay: float

    def __post_init__(self) -> None:
        if not 0 <= self.auth_succeeded <= self.auth_requested:
            raise ValueError("need 0 <= auth_succeeded <= auth_requested")
        if not 0 <= self.violations <= self.checks:
            raise ValueError("need 0 <= violations <= checks")
        if not self.realized_delay > 0:
            raise ValueError("realized_delay must be > 0")


@dataclass(frozen=True)
class SettlementRecord:
    price: float
    deposit: float
    auth_score: float
    policy_score: float
    sla_score: float
    refund_ratio: float
    refunded: float
    forfeited: float
    buyer_compensation: float
    platform_cut: float
    buyer_utility: float
    seller_utility: float
    # inputs kept for auditing
    effective_valuation: float
    effective_ask: float
    margin: float

    @property
    def scores(self) -> tuple[float, float, float]:
        return (self.auth_score, self.policy_score, self.sla_score)

    @property
    def seller_receipt(self) -> float:
        """Price net of the forfeited part of the deposit."""
        return self.price - self.forfeited


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def midpoint_price(v_hat: float, a_hat: float) -> float:
    return (v_hat + a_hat) / 2.0


def capped_deposit(z_star: float, q: float, margin: float, cfg: MechanismConfig) -> float:
    if not margin > 0:
        raise ValueError("deposits are only assigned to positive-margin trades")
    raw = cfg.deposit_verif_coeff * z_star + cfg.deposit_posture_coeff * (1.0 - q)
    return min(raw, cfg.deposit_cap_ratio * margin)


def compliance_scores(m: ComplianceMeasurement, deadline: float) -> tuple[float, float, float]:
    auth = m.auth_succeeded / max(1, m.auth_requested)
    policy = _clamp01(1.0 - m.violations / max(1, m.checks))
    sla = _clamp01(1.0 - max(0.0, m.realized_delay - deadline) / deadline)
    return auth, policy, sla


def refund_ratio(scores: tuple[float, float, float], cfg: MechanismConfig) -> float:
    e1, e2, e3 = cfg.refund_weights
    a, g, s = scores
    return _clamp01(e1 * a + e2 * g + e3 * s)


def settle_trade(evaluation: PackageEvaluation, q: float, measurement: ComplianceMeasurement,
                 deadline: float, cfg: MechanismConfig, deposit_enabled: bool = True,
                 deposit: float | None = None) -> SettlementRecord:
    """Settle one accepted trade.

    ``deposit`` overrides the capped rule (used for fault injection in tests);
    with ``deposit_enabled`` off the deposit is zero.
    """
    v_hat, a_hat, margin = evaluation.effective_valuation, evaluation.effective_ask, evaluation.margin
    price = midpoint_price(v_hat, a_hat)
    if deposit is None:
        deposit = capped_deposit(evaluation.package.verification, q, margin, cfg) if deposit_enabled else 0.0
    scores = compliance_scores(measurement, deadline)
    rho = refund_ratio(scores, cfg)
    refunded = rho * deposit
    forfeited = deposit - refunded
    comp = cfg.compensation_share * forfeited
    plt = forfeited - comp
    return SettlementRecord(
        price=price,
        deposit=deposit,
        auth_score=scores[0],
        policy_score=scores[1],
        sla_score=scores[2],
        refund_ratio=rho,
        refunded=refunded,
        forfeited=forfeited,
        buyer_compensation=comp,
        platform_cut=plt,
        buyer_utility=v_hat - price + comp,
        seller_utility=price - a_hat - forfeited,
        effective_valuation=v_hat,
        effective_ask=a_hat,
        margin=margin,
    )
