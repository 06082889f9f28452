"""Market entities, mechanism parameters and per-round scenario generation.

Units used throughout the package: bandwidth in MHz, rates in Mbit/s, data
sizes in MB (converted to Mbit with a factor 8), workloads in giga-cycles,
compute capacity in giga-cycles/s, delays in seconds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised for invalid market, mechanism or scenario configuration."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_range(name: str, rng: tuple[float, float], lo: float = -math.inf,
                 hi: float = math.inf, strict_lo: bool = False) -> None:
    a, b = rng
    _require(a < b, f"{name}: degenerate range {rng}")
    if strict_lo:
        _require(a > lo, f"{name}: lower bound must exceed {lo}, got {a}")
    else:
        _require(a >= lo, f"{name}: lower bound must be >= {lo}, got {a}")
    _require(b <= hi, f"{name}: upper bound must be <= {hi}, got {b}")


@dataclass(frozen=True)
class BuyerRequest:
    buyer_id: int
    data_size: float  # MB
    workload: float  # giga-cycles
    deadline: float  # s
    privacy_sensitivity: float
    min_security: float
    valuation: float
    delay_penalty: float  # per second
    privacy_penalty: float  # per risk unit

    def __post_init__(self) -> None:
        for name in ("data_size", "workload", "deadline", "valuation",
                     "delay_penalty", "privacy_penalty"):
            _require(getattr(self, name) > 0, f"buyer {self.buyer_id}: {name} must be > 0")
        _require(0.0 <= self.privacy_sensitivity <= 1.0,
                 f"buyer {self.buyer_id}: privacy_sensitivity outside [0, 1]")
        _require(0.0 <= self.min_security <= 1.0,
                 f"buyer {self.buyer_id}: min_security outside [0, 1]")


@dataclass(frozen=True)
class SellerState:
    seller_id: int
    bandwidth: float  # MHz
    compute: float  # giga-cycles/s
    posture: float
    verification_levels: tuple[float, ...]
    base_ask: float
    unit_bandwidth_cost: float
    unit_compute_cost: float

    def __post_init__(self) -> None:
        sid = self.seller_id
        _require(self.bandwidth > 0 and self.compute > 0, f"seller {sid}: capacities must be > 0")
        _require(self.base_ask >= 0, f"seller {sid}: base_ask must be >= 0")
        _require(self.unit_bandwidth_cost > 0 and self.unit_compute_cost > 0,
                 f"seller {sid}: unit costs must be > 0")
        _require(0.0 <= self.posture <= 1.0, f"seller {sid}: posture outside [0, 1]")
        levels = tuple(self.verification_levels)
        _require(len(levels) > 0, f"seller {sid}: empty verification level set")
        _require(all(0.0 <= z <= 1.0 for z in levels), f"seller {sid}: verification level outside [0, 1]")
        _require(all(a < b for a, b in zip(levels, levels[1:])),
                 f"seller {sid}: verification levels must be strictly ascending")
        object.__setattr__(self, "verification_levels", levels)


@dataclass(frozen=True)
class Package:
    bandwidth: float
    compute: float
    verification: float

    def __post_init__(self) -> None:
        _require(self.bandwidth > 0 and self.compute > 0, "package resources must be > 0")
        _require(0.0 <= self.verification <= 1.0, "package verification outside [0, 1]")


def default_compliance(z, q, weight):
    return weight * z + (1.0 - weight) * q


def default_risk(z, q):
    return (1.0 - z) * (1.0 - q)


@dataclass(frozen=True)
class MechanismConfig:
    """Coefficients of the package, settlement and posture models.

    ``compliance_fn(z, q, weight)`` and ``risk_fn(z, q)`` must accept numpy
    arrays as well as floats.
    """

    delay_verif_coeff: float = 0.02
    delay_posture_coeff: float = 0.10
    compliance_weight: float = 0.5
    zt_verif_cost: float = 0.05
    zt_posture_cost: float = 1.0
    refund_weights: tuple[float, float, float] = (0.35, 0.30, 0.35)
    deposit_verif_coeff: float = 1.0
    deposit_posture_coeff: float = 2.0
    deposit_cap_ratio: float = 0.40
    compensation_share: float = 0.70
    posture_step: float = 0.3
    compliance_fn: Callable = field(default=default_compliance, compare=False, repr=False)
    risk_fn: Callable = field(default=default_risk, compare=False, repr=False)

    def __post_init__(self) -> None:
        for name in ("delay_verif_coeff", "delay_posture_coeff", "zt_verif_cost",
                     "zt_posture_cost", "deposit_verif_coeff", "deposit_posture_coeff"):
            _require(getattr(self, name) > 0, f"{name} must be > 0")
        _require(0.0 <= self.compliance_weight <= 1.0, "compliance_weight outside [0, 1]")
        w = tuple(float(x) for x in self.refund_weights)
        _require(len(w) == 3 and all(x >= 0 for x in w), "refund_weights must be three nonnegative numbers")
        _require(abs(sum(w) - 1.0) <= 1e-12, f"refund_weights must sum to 1, got {sum(w)!r}")
        object.__setattr__(self, "refund_weights", w)
        _require(0.0 < self.deposit_cap_ratio < 0.5, "deposit_cap_ratio must lie in (0, 0.5)")
        _require(0.0 <= self.compensation_share <= 1.0, "compensation_share outside [0, 1]")
        _require(0.0 < self.posture_step <= 1.0, "posture_step must lie in (0, 1]")


@dataclass(frozen=True)
class EffortModel:
    tau0: float = -1.0
    tau1: float = 2.0
    tau2: float = 2.0
    auth_events_per_trade: int = 20
    policy_checks_per_trade: int = 20
    violation_scale: float = 0.6
    delay_inflation_scale: float = 0.8

    def __post_init__(self) -> None:
        _require(self.auth_events_per_trade >= 1 and self.policy_checks_per_trade >= 1,
                 "event counts must be >= 1")
        _require(0.0 <= self.violation_scale <= 1.0, "violation_scale outside [0, 1]")
        _require(self.delay_inflation_scale >= 0.0, "delay_inflation_scale must be >= 0")


@dataclass(frozen=True)
class ChannelState:
    """Linear SINR per (buyer_id, seller_id), stored as a dense pool x sellers array."""

    sinr: np.ndarray

    def __post_init__(self) -> None:
        _require(bool(np.all(self.sinr > 0)), "sinr must be > 0 for every pair")

    def of(self, buyer_id: int, seller_id: int) -> float:
        return float(self.sinr[buyer_id, seller_id])


@dataclass(frozen=True)
class ScenarioConfig:
    num_sellers: int = 6
    horizon: int = 180
    buyer_pool_size: int = 20
    activation_prob: float = 0.3
    activation_profile: Optional[tuple[float, ...]] = None
    # buyer request ranges
    data_size_range: tuple[float, float] = (0.15, 0.95)
    workload_range: tuple[float, float] = (0.10, 1.00)
    deadline_range: tuple[float, float] = (0.25, 0.90)
    privacy_sensitivity_range: tuple[float, float] = (0.20, 1.00)
    min_security_range: tuple[float, float] = (0.40, 0.90)
    valuation_range: tuple[float, float] = (8.0, 20.0)
    delay_penalty_range: tuple[float, float] = (3.0, 6.0)
    privacy_penalty_range: tuple[float, float] = (2.0, 5.0)
    # seller ranges
    bandwidth_range: tuple[float, float] = (6.0, 10.0)
    compute_range: tuple[float, float] = (18.0, 32.0)
    posture_range: tuple[float, float] = (0.50, 0.92)
    base_ask_range: tuple[float, float] = (2.0, 6.0)
    unit_bandwidth_cost_range: tuple[float, float] = (0.08, 0.18)
    unit_compute_cost_range: tuple[float, float] = (0.10, 0.22)
    verification_levels: tuple[float, ...] = (0.0, 0.45, 0.9)
    fixed_base_ask: bool = False
    snap_capacities: bool = True
    sinr_db_range: tuple[float, float] = (5.0, 25.0)
    # (bandwidth levels, compute levels, verification levels)
    package_grid: tuple[int, int, int] = (4, 4, 3)
    resource_quantum: tuple[float, float] = (0.5, 0.5)
    dp_state_cap: int = 10_000_000
    rng_seed: int = 42
    mechanism: MechanismConfig = field(default_factory=MechanismConfig)
    effort: EffortModel = field(default_factory=EffortModel)

    def __post_init__(self) -> None:
        _require(self.num_sellers >= 1, "num_sellers must be >= 1 (empty seller list)")
        _require(self.horizon >= 1, "horizon must be >= 1")
        _require(self.buyer_pool_size >= 0, "buyer_pool_size must be >= 0")
        _require(0.0 <= self.activation_prob <= 1.0, "activation_prob outside [0, 1]")
        if self.activation_profile is not None:
            prof = tuple(float(p) for p in self.activation_profile)
            _require(all(0.0 <= p <= 1.0 for p in prof), "activation probabilities outside [0, 1]")
            _require(len(prof) >= self.buyer_pool_size,
                     f"activation profile has {len(prof)} entries, pool needs {self.buyer_pool_size}")
            object.__setattr__(self, "activation_profile", prof)
        for name in ("data_size_range", "workload_range", "deadline_range", "valuation_range",
                     "delay_penalty_range", "privacy_penalty_range", "bandwidth_range",
                     "compute_range", "unit_bandwidth_cost_range", "unit_compute_cost_range"):
            _check_range(name, getattr(self, name), lo=0.0, strict_lo=True)
        for name in ("privacy_sensitivity_range", "min_security_range", "posture_range"):
            _check_range(name, getattr(self, name), lo=0.0, hi=1.0)
        _check_range("base_ask_range", self.base_ask_range, lo=0.0)
        _check_range("sinr_db_range", self.sinr_db_range)
        levels = tuple(float(z) for z in self.verification_levels)
        _require(len(levels) > 0 and all(0.0 <= z <= 1.0 for z in levels)
                 and all(a < b for a, b in zip(levels, levels[1:])),
                 "verification_levels must be non-empty, ascending, within [0, 1]")
        object.__setattr__(self, "verification_levels", levels)
        grid = tuple(int(n) for n in self.package_grid)
        _require(len(grid) == 3 and all(n >= 1 for n in grid), "package_grid counts must be >= 1")
        _require(grid[2] <= len(levels), "verification grid count exceeds number of levels")
        object.__setattr__(self, "package_grid", grid)
        _require(all(x > 0 for x in self.resource_quantum), "resource_quantum components must be > 0")
        _require(self.dp_state_cap >= 1, "dp_state_cap must be >= 1")
        if self.snap_capacities:
            for name, step in (("bandwidth_range", grid[0] * self.resource_quantum[0]),
                               ("compute_range", grid[1] * self.resource_quantum[1])):
                lo, hi = getattr(self, name)
                _require(math.floor(hi / step + 1e-9) >= math.ceil(lo / step - 1e-9),
                         f"{name} contains no multiple of {step} to snap to")

    def activation_probs(self) -> np.ndarray:
        if self.activation_profile is not None:
            return np.asarray(self.activation_profile[: self.buyer_pool_size], dtype=float)
        return np.full(self.buyer_pool_size, self.activation_prob)


def load_activation_profile(path: str | Path) -> tuple[float, ...]:
    """Read one activation probability per line; blank lines and '#' comments are skipped."""
    probs = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            try:
                p = float(row[0])
            except ValueError as exc:
                raise ConfigError(f"{path}: bad probability {row[0]!r}") from exc
            _require(0.0 <= p <= 1.0, f"{path}: probability {p} outside [0, 1]")
            probs.append(p)
    return tuple(probs)


@dataclass(frozen=True)
class SellerProfile:
    """Per-episode constants of a seller."""

    seller_id: int
    verification_levels: tuple[float, ...]
    unit_bandwidth_cost: float
    unit_compute_cost: float
    base_ask: float
    initial_posture: float


@dataclass(frozen=True)
class RoundSample:
    round_index: int
    buyers: list[BuyerRequest]
    sellers: list[SellerState]
    channel: ChannelState


def _uniform(rng: np.random.Generator, bounds: tuple[float, float], size) -> np.ndarray:
    return rng.uniform(bounds[0], bounds[1], size)


def _snapped(rng: np.random.Generator, bounds: tuple[float, float], step: float, size) -> np.ndarray:
    lo = math.ceil(bounds[0] / step - 1e-9)
    hi = math.floor(bounds[1] / step + 1e-9)
    return rng.integers(lo, hi + 1, size).astype(float) * step


def init_sellers(scenario: ScenarioConfig, rng: np.random.Generator) -> list[SellerProfile]:
    """Draw the per-episode seller constants, including the initial postures."""
    m = scenario.num_sellers
    kb = _uniform(rng, scenario.unit_bandwidth_cost_range, m)
    kf = _uniform(rng, scenario.unit_compute_cost_range, m)
    ask = _uniform(rng, scenario.base_ask_range, m)
    q0 = _uniform(rng, scenario.posture_range, m)
    return [
        SellerProfile(j, scenario.verification_levels, float(kb[j]), float(kf[j]),
                      float(ask[j]), float(q0[j]))
        for j in range(m)
    ]


def sample_round(scenario: ScenarioConfig, rng: np.random.Generator, round_index: int,
                 profiles: Sequence[SellerProfile], postures: Sequence[float]) -> RoundSample:
    """Draw the active buyers, seller capacities and channel for one round.

    Every pool buyer's fields are drawn whether or not the buyer activates, so
    the stream consumption per round does not depend on the outcome.
    """
    if round_index < 0 or round_index >= scenario.horizon:
        raise ConfigError(f"round_index {round_index} outside horizon {scenario.horizon}")
    if not profiles:
        raise ConfigError("empty seller list")
    if len(postures) != len(profiles):
        raise ConfigError("one posture per seller required")
    n, m = scenario.buyer_pool_size, len(profiles)

    active = rng.random(n) < scenario.activation_probs()
    cols = [
        _uniform(rng, scenario.data_size_range, n),
        _uniform(rng, scenario.workload_range, n),
        _uniform(rng, scenario.deadline_range, n),
        _uniform(rng, scenario.privacy_sensitivity_range, n),
        _uniform(rng, scenario.min_security_range, n),
        _uniform(rng, scenario.valuation_range, n),
        _uniform(rng, scenario.delay_penalty_range, n),
        _uniform(rng, scenario.privacy_penalty_range, n),
    ]
    if scenario.snap_capacities:
        (gb, gf, _), (qb, qf) = scenario.package_grid, scenario.resource_quantum
        bw = _snapped(rng, scenario.bandwidth_range, gb * qb, m)
        cpu = _snapped(rng, scenario.compute_range, gf * qf, m)
    else:
        bw = _uniform(rng, scenario.bandwidth_range, m)
        cpu = _uniform(rng, scenario.compute_range, m)
    asks = _uniform(rng, scenario.base_ask_range, m)
    sinr_db = _uniform(rng, scenario.sinr_db_range, (n, m))

    buyers = [
        BuyerRequest(i, *(float(c[i]) for c in cols))
        for i in range(n) if active[i]
    ]
    sellers = [
        SellerState(
            seller_id=p.seller_id,
            bandwidth=float(bw[k]),
            compute=float(cpu[k]),
            posture=float(postures[k]),
            verification_levels=p.verification_levels,
            base_ask=p.base_ask if scenario.fixed_base_ask else float(asks[k]),
            unit_bandwidth_cost=p.unit_bandwidth_cost,
            unit_compute_cost=p.unit_compute_cost,
        )
        for k, p in enumerate(profiles)
    ]
    channel = ChannelState(10.0 ** (sinr_db / 10.0))
    return RoundSample(round_index, buyers, sellers, channel)


def grid_levels(capacity: float, count: int) -> np.ndarray:
    """Evenly spaced shares k * capacity / count for k = 1..count."""
    return capacity * np.arange(1, count + 1) / count


def select_levels(levels: Sequence[float], count: int) -> tuple[float, ...]:
    """Pick ``count`` evenly spaced levels, always including the highest."""
    k = len(levels)
    if count >= k:
        return tuple(levels)
    idx = [int(round((r + 1) * k / count)) - 1 for r in range(count)]
    return tuple(levels[i] for i in idx)


def enumerate_candidates(buyer: BuyerRequest, seller: SellerState,
                         scenario: ScenarioConfig) -> list[Package]:
    """Cartesian package grid for one pair, ordered by (bandwidth, compute, verification)."""
    nb, nf, nz = scenario.package_grid
    zs = select_levels(seller.verification_levels, nz)
    return [
        Package(float(b), float(f), float(z))
        for b in grid_levels(seller.bandwidth, nb)
        for f in grid_levels(seller.compute, nf)
        for z in zs
    ]
