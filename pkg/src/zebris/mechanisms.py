"""ZEBRIS and the five comparison mechanisms as configurations of one round pipeline.

A round runs: package screening -> best package per pair -> clearing ->
midpoint pricing and deposit -> execution and settlement -> posture feedback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .clearing import (
    CandidatePair,
    ClearingOutcome,
    build_candidate_set,
    dp_clear,
    outcome_from,
    quantize_resources,
)
from .market_model import RoundSample, ScenarioConfig
from .package_eval import EvaluationView, PairChoice, evaluate_round
from .posture import PostureLedger
from .runtime_sim import compliance_from_uniforms, effort_level, uniforms_per_trade
from .settlement import ComplianceMeasurement, SettlementRecord, capped_deposit, settle_trade

MARGIN_DP = "margin-DP"
ASK_FIRST = "ask-first-greedy"
RAW_MARGIN_DP = "raw-margin-DP"
CLEARING_RULES = (MARGIN_DP, ASK_FIRST, RAW_MARGIN_DP)


@dataclass(frozen=True)
class MechanismSpec:
    name: str
    use_privacy_penalty: bool = True
    use_zt_cost: bool = True
    enforce_security_constraint: bool = True
    deposit_enabled: bool = True
    posture_dynamic: bool = True
    clearing_rule: str = MARGIN_DP
    use_delay_penalty: bool = True
    enforce_deadline: bool = True

    def __post_init__(self) -> None:
        if self.clearing_rule not in CLEARING_RULES:
            raise ValueError(f"unknown clearing rule {self.clearing_rule!r}")

    @property
    def view(self) -> EvaluationView:
        return EvaluationView(
            use_delay_penalty=self.use_delay_penalty,
            use_privacy_penalty=self.use_privacy_penalty,
            use_zt_cost=self.use_zt_cost,
            enforce_security=self.enforce_security_constraint,
            enforce_deadline=self.enforce_deadline,
        )


ZEBRIS = MechanismSpec("ZEBRIS")
ZEBRIS_S = MechanismSpec("ZEBRIS-S", posture_dynamic=False)
ZT_ONLY = MechanismSpec("ZTOnly", deposit_enabled=False, posture_dynamic=False)
P_AWARE = MechanismSpec("PAware", deposit_enabled=False, posture_dynamic=False)
ASK_FIRST_SPEC = MechanismSpec("AskFirst", deposit_enabled=False, posture_dynamic=False,
                               clearing_rule=ASK_FIRST)
RES_ONLY = MechanismSpec("ResOnly", use_privacy_penalty=False, use_zt_cost=False,
                         enforce_security_constraint=False, deposit_enabled=False,
                         posture_dynamic=False, clearing_rule=RAW_MARGIN_DP,
                         use_delay_penalty=False)

MECHANISMS: dict[str, MechanismSpec] = {
    m.name: m for m in (ZEBRIS, ZEBRIS_S, ZT_ONLY, P_AWARE, ASK_FIRST_SPEC, RES_ONLY)
}


def get_mechanism(name: str, resonly_enforce_deadline: bool = True) -> MechanismSpec:
    try:
        spec = MECHANISMS[name]
    except KeyError:
        raise ValueError(f"unknown mechanism {name!r}; valid names: {', '.join(MECHANISMS)}") from None
    if spec is RES_ONLY and not resonly_enforce_deadline:
        spec = MechanismSpec(**{**spec.__dict__, "enforce_deadline": False})
    return spec


def ask_first_clear(pairs: Sequence[CandidatePair], sellers,
                    quantum: Optional[tuple[float, float]] = None) -> ClearingOutcome:
    """Greedy admission in ascending effective ask.

    With ``quantum`` the same rounded resources as the DP are used, so both
    rules see the identical feasible set.
    """
    if quantum is not None:
        inst = quantize_resources(pairs, sellers, quantum)
        items = list(zip(inst.pairs, inst.demand))
        residual = {sid: list(c) for sid, c in inst.capacity.items()}
        real = inst.real_capacity
    else:
        real = dict(sellers) if isinstance(sellers, dict) else {s.seller_id: (s.bandwidth, s.compute) for s in sellers}
        items = [(p, (p.bandwidth, p.compute)) for p in pairs]
        residual = {sid: list(c) for sid, c in real.items()}
    items.sort(key=lambda it: (it[0].evaluation.effective_ask, it[0].buyer_id, it[0].seller_id))
    matched, accepted = set(), []
    slack = 0 if quantum is not None else 1e-9
    for p, (db, dc) in items:
        if p.buyer_id in matched:
            continue
        r = residual[p.seller_id]
        if db <= r[0] + slack and dc <= r[1] + slack:
            r[0] -= db
            r[1] -= dc
            matched.add(p.buyer_id)
            accepted.append(p)
    return outcome_from(accepted, real)


@dataclass(frozen=True)
class Trade:
    pair: CandidatePair
    posture: float
    deadline: float
    privacy_penalty: float
    effort: float
    measurement: ComplianceMeasurement
    settlement: SettlementRecord


@dataclass(frozen=True)
class RoundResult:
    round_index: int
    candidates: tuple[CandidatePair, ...]
    outcome: ClearingOutcome
    trades: tuple[Trade, ...]
    postures_before: dict[int, float]
    postures_after: dict[int, float]
    active_buyers: int

    @property
    def settlements(self) -> list[SettlementRecord]:
        return [t.settlement for t in self.trades]


def clear(mechanism: MechanismSpec, candidates: Sequence[CandidatePair], sellers,
          scenario: ScenarioConfig) -> ClearingOutcome:
    if mechanism.clearing_rule == ASK_FIRST:
        return ask_first_clear(candidates, sellers, scenario.resource_quantum)
    inst = quantize_resources(candidates, sellers, scenario.resource_quantum)
    return dp_clear(inst, scenario.dp_state_cap)


UniformSource = Callable[[int], np.ndarray]


def run_round(mechanism: MechanismSpec, sample: RoundSample, scenario: ScenarioConfig,
              ledger: PostureLedger, uniforms: UniformSource | np.random.Generator,
              choices: Optional[list[PairChoice]] = None) -> RoundResult:
    """Run one round of ``mechanism`` and update ``ledger`` in place.

    ``uniforms`` is either a generator or a callable returning the block of
    uniforms reserved for a given buyer id, which keeps runtime draws paired
    across mechanisms.
    """
    cfg = scenario.mechanism
    if choices is None:
        choices = evaluate_round(sample.buyers, sample.sellers, sample.channel, scenario, cfg, mechanism.view)
    candidates = build_candidate_set(choices)
    outcome = clear(mechanism, candidates, sample.sellers, scenario)

    buyers = {b.buyer_id: b for b in sample.buyers}
    sellers = {s.seller_id: s for s in sample.sellers}
    k = uniforms_per_trade(scenario.effort)
    trades = []
    for pair in outcome.accepted:
        buyer, q = buyers[pair.buyer_id], sellers[pair.seller_id].posture
        ev = pair.evaluation
        deposit = (capped_deposit(ev.package.verification, q, ev.margin, cfg)
                   if mechanism.deposit_enabled else 0.0)
        eps = effort_level(q, deposit, ev.effective_ask, scenario.effort)
        u = uniforms.random(k) if isinstance(uniforms, np.random.Generator) else uniforms(pair.buyer_id)
        meas = compliance_from_uniforms(eps, pair.reference.delay, scenario.effort, u)
        rec = settle_trade(ev, q, meas, buyer.deadline, cfg, deposit=deposit)
        trades.append(Trade(pair, q, buyer.deadline, buyer.privacy_penalty, eps, meas, rec))

    before = dict(ledger.postures)
    refunds: dict[int, list[float]] = {}
    for t in trades:
        refunds.setdefault(t.pair.seller_id, []).append(t.settlement.refund_ratio)
    after = ledger.apply(sample.round_index, refunds, cfg.posture_step, mechanism.posture_dynamic)
    return RoundResult(sample.round_index, tuple(candidates), outcome, tuple(trades),
                       before, after, len(sample.buyers))
