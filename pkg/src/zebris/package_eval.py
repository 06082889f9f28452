"""Per-package delay, risk, compliance and margin evaluation.

The scalar functions mirror the vectorised :func:`evaluate_round`, which the
episode runner uses; the test-suite checks that both agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .market_model import (
    BuyerRequest,
    ChannelState,
    MechanismConfig,
    Package,
    ScenarioConfig,
    SellerState,
    grid_levels,
    select_levels,
)

MBIT_PER_MB = 8.0


class DomainError(ValueError):
    """Non-positive bandwidth, SINR, compute or ask where a positive value is required."""


@dataclass(frozen=True)
class EvaluationView:
    """Which terms a mechanism puts into its valuation, ask and admission test.

    Delay deadline feasibility is always enforced unless ``enforce_deadline``
    is switched off.
    """

    use_delay_penalty: bool = True
    use_privacy_penalty: bool = True
    use_zt_cost: bool = True
    enforce_security: bool = True
    enforce_deadline: bool = True


FULL_VIEW = EvaluationView()


@dataclass(frozen=True)
class PackageEvaluation:
    package: Package
    rate: float
    delay: float
    compliance_score: float
    privacy_risk: float
    zt_cost: float
    effective_valuation: float
    effective_ask: float
    margin: float
    feasible: bool


def transmission_rate(package: Package, sinr: float) -> float:
    if package.bandwidth <= 0 or sinr <= 0:
        raise DomainError(f"rate needs positive bandwidth and sinr, got b={package.bandwidth}, sinr={sinr}")
    return package.bandwidth * math.log2(1.0 + sinr)


def service_delay(buyer: BuyerRequest, seller: SellerState, package: Package,
                  sinr: float, cfg: MechanismConfig) -> float:
    rate = transmission_rate(package, sinr)
    if package.compute <= 0:
        raise DomainError("compute share must be positive")
    return (MBIT_PER_MB * buyer.data_size / rate
            + buyer.workload / package.compute
            + cfg.delay_verif_coeff * package.verification
            + cfg.delay_posture_coeff * (1.0 - seller.posture))


def compliance_score(z: float, q: float, cfg: MechanismConfig) -> float:
    return float(cfg.compliance_fn(z, q, cfg.compliance_weight))


def privacy_risk(buyer: BuyerRequest, z: float, q: float,
                 cfg: Optional[MechanismConfig] = None) -> float:
    phi = cfg.risk_fn if cfg is not None else (lambda z_, q_: (1.0 - z_) * (1.0 - q_))
    return buyer.privacy_sensitivity * float(phi(z, q))


def zt_cost(z: float, q: float, cfg: MechanismConfig) -> float:
    return cfg.zt_verif_cost * z + cfg.zt_posture_cost * (1.0 - q)


def evaluate_package(buyer: BuyerRequest, seller: SellerState, package: Package,
                     sinr: float, cfg: MechanismConfig,
                     view: EvaluationView = FULL_VIEW) -> PackageEvaluation:
    z, q = package.verification, seller.posture
    rate = transmission_rate(package, sinr)
    delay = service_delay(buyer, seller, package, sinr, cfg)
    g = compliance_score(z, q, cfg)
    xi = privacy_risk(buyer, z, q, cfg)
    c_zt = zt_cost(z, q, cfg)

    v_hat = buyer.valuation
    if view.use_delay_penalty:
        v_hat -= buyer.delay_penalty * delay
    if view.use_privacy_penalty:
        v_hat -= buyer.privacy_penalty * xi
    a_hat = (seller.base_ask + seller.unit_bandwidth_cost * package.bandwidth
             + seller.unit_compute_cost * package.compute)
    if view.use_zt_cost:
        a_hat += c_zt
    feasible = ((not view.enforce_deadline or delay <= buyer.deadline)
                and (not view.enforce_security or g >= buyer.min_security))
    return PackageEvaluation(package, rate, delay, g, xi, c_zt, v_hat, a_hat, v_hat - a_hat, feasible)


def best_feasible_package(buyer: BuyerRequest, seller: SellerState, candidates: Sequence[Package],
                          sinr: float, cfg: MechanismConfig,
                          view: EvaluationView = FULL_VIEW) -> Optional[PackageEvaluation]:
    """Feasible evaluation with the largest margin, or None when nothing is feasible.

    Ties go to the smaller bandwidth, then compute, then verification level.
    """
    best = None
    for pkg in candidates:
        ev = evaluate_package(buyer, seller, pkg, sinr, cfg, view)
        if not ev.feasible:
            continue
        if best is None or ev.margin > best.margin:
            best = ev
        elif ev.margin == best.margin:
            key = (pkg.bandwidth, pkg.compute, pkg.verification)
            bkey = (best.package.bandwidth, best.package.compute, best.package.verification)
            if key < bkey:
                best = ev
    return best


@dataclass(frozen=True)
class PairChoice:
    """Best package of one pair under a mechanism's view, plus its full-model evaluation."""

    buyer_id: int
    seller_id: int
    evaluation: PackageEvaluation
    reference: PackageEvaluation


def evaluate_round(buyers: Sequence[BuyerRequest], sellers: Sequence[SellerState],
                   channel: ChannelState, scenario: ScenarioConfig, cfg: MechanismConfig,
                   view: EvaluationView = FULL_VIEW) -> list[PairChoice]:
    """Best feasible package for every (buyer, seller) pair of a round.

    Pairs without a feasible package are omitted. Output is ordered by
    (buyer_id, seller_id).
    """
    if not buyers or not sellers:
        return []
    nb, nf, nz = scenario.package_grid
    cols = np.array([(b.data_size, b.workload, b.deadline, b.privacy_sensitivity, b.min_security,
                      b.valuation, b.delay_penalty, b.privacy_penalty) for b in buyers])
    L, C, dmax, ell, smin, val, alpha, beta = (cols[:, k, None, None] for k in range(8))
    ids = [b.buyer_id for b in buyers]
    sids = [s.seller_id for s in sellers]

    # package grids, one row per seller: shape (sellers, packages)
    bws = np.array([grid_levels(s.bandwidth, nb) for s in sellers])
    cpus = np.array([grid_levels(s.compute, nf) for s in sellers])
    zs = np.array([select_levels(s.verification_levels, nz) for s in sellers])
    b = np.repeat(bws, nf * nz, axis=1)[None]
    f = np.tile(np.repeat(cpus, nz, axis=1), (1, nb))[None]
    z = np.tile(zs, (1, nb * nf))[None]
    q = np.array([s.posture for s in sellers])[None, :, None]
    ask0 = np.array([s.base_ask for s in sellers])[None, :, None]
    kb = np.array([s.unit_bandwidth_cost for s in sellers])[None, :, None]
    kf = np.array([s.unit_compute_cost for s in sellers])[None, :, None]

    spectral = np.log2(1.0 + channel.sinr[np.ix_(ids, sids)])[:, :, None]
    rate = b * spectral
    delay = (MBIT_PER_MB * L / rate + C / f + cfg.delay_verif_coeff * z
             + cfg.delay_posture_coeff * (1.0 - q))
    shape = delay.shape
    g = np.broadcast_to(cfg.compliance_fn(z, q, cfg.compliance_weight), shape)
    xi = ell * cfg.risk_fn(z, q)
    czt = np.broadcast_to(cfg.zt_verif_cost * z + cfg.zt_posture_cost * (1.0 - q), shape)
    v_hat = np.broadcast_to(val, shape)
    if view.use_delay_penalty:
        v_hat = v_hat - alpha * delay
    if view.use_privacy_penalty:
        v_hat = v_hat - beta * xi
    a_hat = np.broadcast_to(ask0 + kb * b + kf * f, shape)
    if view.use_zt_cost:
        a_hat = a_hat + czt
    margin = v_hat - a_hat
    feas = np.ones(shape, dtype=bool)
    if view.enforce_deadline:
        feas &= delay <= dmax
    if view.enforce_security:
        feas &= g >= smin
    # first maximum in grid order, i.e. smaller bandwidth, then compute, then verification
    best = np.argmax(np.where(feas, margin, -np.inf), axis=2)
    r_idx, s_idx = np.nonzero(np.take_along_axis(feas, best[:, :, None], axis=2)[:, :, 0])

    k_idx = best[r_idx, s_idx]
    sel = (r_idx, s_idx, k_idx)
    pkgs = zip(b[0, s_idx, k_idx].tolist(), f[0, s_idx, k_idx].tolist(), z[0, s_idx, k_idx].tolist())
    fields = zip(rate[sel].tolist(), delay[sel].tolist(), g[sel].tolist(), xi[sel].tolist(),
                 czt[sel].tolist(), v_hat[sel].tolist(), a_hat[sel].tolist(), margin[sel].tolist())
    out = []
    for r, j, pk, fl in zip(r_idx.tolist(), s_idx.tolist(), pkgs, fields):
        seller = sellers[j]
        pkg = Package(*pk)
        ev = PackageEvaluation(pkg, *fl, True)
        ref = ev if view == FULL_VIEW else evaluate_package(
            buyers[r], seller, pkg, channel.of(ids[r], seller.seller_id), cfg)
        out.append(PairChoice(ids[r], seller.seller_id, ev, ref))
    return out
