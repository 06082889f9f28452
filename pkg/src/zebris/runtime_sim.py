"""Stochastic runtime-compliance outcomes driven by a deposit-aware effort level.

Binomial counts are generated by thresholding uniforms, so draws that share
the same uniforms are monotonically coupled in the effort level.
"""

from __future__ import annotations

import math

import numpy as np

from .market_model import EffortModel
from .package_eval import DomainError
from .settlement import ComplianceMeasurement


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def effort_level(q: float, deposit: float, ask: float, model: EffortModel) -> float:
    if not ask > 0:
        raise DomainError(f"effort level needs a positive effective ask, got {ask}")
    return sigmoid(model.tau0 + model.tau1 * q + model.tau2 * deposit / ask)


def uniforms_per_trade(model: EffortModel) -> int:
    return model.auth_events_per_trade + model.policy_checks_per_trade + 1


def compliance_from_uniforms(epsilon: float, planned_delay: float, model: EffortModel,
                             u: np.ndarray) -> ComplianceMeasurement:
    """Deterministic map from a block of U[0,1) draws to a measurement."""
    n_req, n_chk = model.auth_events_per_trade, model.policy_checks_per_trade
    if len(u) < n_req + n_chk + 1:
        raise ValueError("not enough uniforms for one trade")
    if not planned_delay > 0:
        raise ValueError("planned delay must be > 0")
    n_succ = int(np.count_nonzero(u[:n_req] < epsilon))
    n_vio = int(np.count_nonzero(u[n_req:n_req + n_chk] < model.violation_scale * (1.0 - epsilon)))
    x = float(u[n_req + n_chk])
    d_real = planned_delay * (1.0 + model.delay_inflation_scale * (1.0 - epsilon) * x)
    return ComplianceMeasurement(n_req, n_succ, n_chk, n_vio, d_real)


def draw_compliance(epsilon: float, planned_delay: float, model: EffortModel,
                    rng: np.random.Generator) -> ComplianceMeasurement:
    return compliance_from_uniforms(epsilon, planned_delay, model, rng.random(uniforms_per_trade(model)))
