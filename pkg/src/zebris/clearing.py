"""Positive-margin candidate set and welfare-maximising round clearing.

``dp_clear`` is a buyer-sequential dynamic programme over per-seller residual
resource quanta; ``brute_force_clear`` enumerates every assignment and is the
validation oracle for it. Both prefer, among equal-welfare outcomes, the one
that leaves the earliest buyer unmatched, then the one assigning it to the
lowest seller id.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _dpkernel as _k
from .market_model import Package
from .package_eval import PackageEvaluation, PairChoice

# slack for float comparisons on capacities and welfare ties
EPS = 1e-9


class ClearingError(RuntimeError):
    pass


class StateSpaceExceeded(ClearingError):
    pass


@dataclass(frozen=True)
class CandidatePair:
    buyer_id: int
    seller_id: int
    evaluation: PackageEvaluation
    # full-model evaluation of the same package; differs from ``evaluation``
    # only for mechanisms that score packages with a reduced view
    reference: Optional[PackageEvaluation] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.evaluation.margin > 0:
            raise ValueError(f"pair ({self.buyer_id}, {self.seller_id}) has non-positive margin")
        if self.reference is None:
            object.__setattr__(self, "reference", self.evaluation)

    @property
    def margin(self) -> float:
        return self.evaluation.margin

    @property
    def bandwidth(self) -> float:
        return self.evaluation.package.bandwidth

    @property
    def compute(self) -> float:
        return self.evaluation.package.compute


@dataclass(frozen=True)
class ClearingOutcome:
    accepted: tuple[CandidatePair, ...]
    welfare: float
    residual: dict[int, tuple[float, float]]


def outcome_from(accepted: Iterable[CandidatePair],
                 capacities: Mapping[int, tuple[float, float]]) -> ClearingOutcome:
    acc = tuple(sorted(accepted, key=lambda p: (p.buyer_id, p.seller_id)))
    residual = {sid: [bw, cpu] for sid, (bw, cpu) in capacities.items()}
    for p in acc:
        residual[p.seller_id][0] -= p.bandwidth
        residual[p.seller_id][1] -= p.compute
    welfare = math.fsum(p.margin for p in acc)
    return ClearingOutcome(acc, welfare, {k: (v[0], v[1]) for k, v in residual.items()})


def build_candidate_set(choices: Iterable[PairChoice | CandidatePair]) -> list[CandidatePair]:
    """Keep exactly the pairs with strictly positive margin, ordered by (buyer, seller)."""
    out = []
    for c in choices:
        if c.evaluation.margin > 0:
            ref = getattr(c, "reference", None)
            out.append(CandidatePair(c.buyer_id, c.seller_id, c.evaluation, ref))
    out.sort(key=lambda p: (p.buyer_id, p.seller_id))
    return out


@dataclass(frozen=True)
class QuantizedInstance:
    pairs: tuple[CandidatePair, ...]
    demand: tuple[tuple[int, int], ...]  # quanta per pair, aligned with ``pairs``
    capacity: dict[int, tuple[int, int]]  # quanta per seller
    real_capacity: dict[int, tuple[float, float]]
    quantum: tuple[float, float]
    dropped: tuple[CandidatePair, ...] = ()


def _ceil_quanta(x: float, step: float) -> int:
    return int(math.ceil(x / step - EPS))


def _floor_quanta(x: float, step: float) -> int:
    return int(math.floor(x / step + EPS))


def capacities_of(sellers) -> dict[int, tuple[float, float]]:
    return {s.seller_id: (s.bandwidth, s.compute) for s in sellers}


def quantize_resources(pairs: Sequence[CandidatePair], sellers,
                       quantum: tuple[float, float]) -> QuantizedInstance:
    """Round capacities down and demands up to whole quanta.

    ``sellers`` is a sequence of SellerState or a mapping seller_id -> (B, F).
    Pairs whose rounded demand exceeds the rounded capacity are dropped.
    """
    qb, qf = quantum
    if qb <= 0 or qf <= 0:
        raise ValueError("quantum components must be > 0")
    real = dict(sellers) if isinstance(sellers, Mapping) else capacities_of(sellers)
    cap = {sid: (_floor_quanta(bw, qb), _floor_quanta(cpu, qf)) for sid, (bw, cpu) in real.items()}
    kept, demand, dropped = [], [], []
    for p in pairs:
        d = (_ceil_quanta(p.bandwidth, qb), _ceil_quanta(p.compute, qf))
        c = cap.get(p.seller_id)
        if c is None or d[0] > c[0] or d[1] > c[1]:
            dropped.append(p)
            continue
        kept.append(p)
        demand.append(d)
    return QuantizedInstance(tuple(kept), tuple(demand), cap, real, (qb, qf), tuple(dropped))


def dp_clear(instance: QuantizedInstance, state_cap: int = 10_000_000, prune: bool = True) -> ClearingOutcome:
    """Maximise total margin over the quantized feasible set.

    Buyers are scanned in ascending id; the state is the vector of residual
    (bandwidth, compute) quanta of the sellers in the instance, stored only
    for reachable states. Residuals are expressed in units of the gcd of a
    seller's demands and clamped to the demand still to come, which merges
    states with identical futures. States whose optimistic completion falls
    below a known feasible welfare are pruned; no state on an optimal path
    is ever pruned, so the optimum and its tie-break are unaffected.
    ``prune=False`` keeps every reachable state, which makes the work per
    buyer layer track the residual state count (used for timing studies).
    """
    if not instance.pairs:
        return outcome_from((), instance.real_capacity)

    seller_ids = sorted({p.seller_id for p in instance.pairs})
    slot_of = {sid: k for k, sid in enumerate(seller_ids)}
    m, nd = len(seller_ids), 2 * len(seller_ids)
    unit = np.zeros(nd, dtype=np.int64)
    for p, (db, dc) in zip(instance.pairs, instance.demand):
        k = 2 * slot_of[p.seller_id]
        unit[k] = math.gcd(int(unit[k]), db)
        unit[k + 1] = math.gcd(int(unit[k + 1]), dc)
    unit = np.maximum(unit, 1)
    cap = np.array([instance.capacity[sid][d] for sid in seller_ids for d in (0, 1)], dtype=np.int64)
    start_dig = cap // unit

    rows = sorted(zip(instance.pairs, instance.demand), key=lambda r: (r[0].buyer_id, r[0].seller_id))
    buyer_ids = sorted({p.buyer_id for p, _ in rows})
    n = len(buyer_ids)
    pos = {b: i for i, b in enumerate(buyer_ids)}
    ptr = np.zeros(n + 1, dtype=np.int64)
    for p, _ in rows:
        ptr[pos[p.buyer_id] + 1] += 1
    ptr = np.cumsum(ptr)
    slot = np.array([slot_of[p.seller_id] for p, _ in rows], dtype=np.int64)
    db = np.array([d[0] for _, d in rows], dtype=np.int64) // unit[2 * slot]
    dc = np.array([d[1] for _, d in rows], dtype=np.int64) // unit[2 * slot + 1]
    margin = np.array([p.margin for p, _ in rows], dtype=float)

    # demand still to come from layer i on, per digit; residuals above it are equivalent
    rem = np.zeros((n + 1, nd), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        rem[i] = rem[i + 1]
        for k in range(ptr[i], ptr[i + 1]):
            rem[i, 2 * slot[k]] += db[k]
            rem[i, 2 * slot[k] + 1] += dc[k]
    start_dig = np.minimum(start_dig, rem[0])
    radix = start_dig + 1
    if float(np.prod(radix.astype(float))) >= 2.0 ** 62:
        raise StateSpaceExceeded("residual state space does not fit a 64-bit encoding; "
                                 "use a coarser resource quantum")
    stride = np.concatenate([[1], np.cumprod(radix)[:-1]]).astype(np.int64)
    start = int(np.dot(start_dig, stride))
    maxr = int(radix.max())

    best = np.array([margin[ptr[i]:ptr[i + 1]].max() for i in range(n)])
    args = (ptr, slot, db, dc, margin, radix)
    if prune:
        tables, suffix = _k.build_tables(best, *args, m, maxr)
        lb = _k.beam_lower_bound(start, BEAM_WIDTH, *args, stride, rem, tables, suffix, m)
        prices = _k.lagrangian_prices(best, lb, start_dig, *args, m, maxr, LAGRANGE_ITERS, LAGRANGE_GAP)
        tables, suffix = _k.build_tables(prices, *args, m, maxr)
        lb = max(lb, _k.beam_lower_bound(start, BEAM_WIDTH, *args, stride, rem, tables, suffix, m))
        lb -= PRUNE_SLACK
    else:
        # an infinite lower bound disables the bound tables entirely
        tables, suffix = np.zeros((n + 1, m, 1, 1)), np.zeros(n + 1)
        lb = -np.inf
    status, choice = _k.solve(start, lb, state_cap, EPS, *args, stride, rem, tables, suffix, m)
    if status == _k.STATE_CAP:
        raise StateSpaceExceeded(f"clearing DP exceeded {state_cap} states; use a coarser resource quantum")
    if status != _k.OK:  # pragma: no cover - values are consistent by construction
        raise ClearingError("DP reconstruction failed")
    accepted = [rows[k][0] for k in choice if k >= 0]
    return outcome_from(accepted, instance.real_capacity)


# pruning parameters; they affect speed only, never the returned outcome
BEAM_WIDTH = 16
LAGRANGE_ITERS = 60
LAGRANGE_GAP = 0.002
PRUNE_SLACK = 1e-7


BRUTE_FORCE_MAX_PAIRS = 20


def brute_force_clear(pairs: Sequence[CandidatePair], sellers) -> ClearingOutcome:
    """Enumerate every buyer -> (none | seller) assignment against real capacities."""
    if len(pairs) > BRUTE_FORCE_MAX_PAIRS:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_PAIRS} pairs, got {len(pairs)}")
    real = dict(sellers) if isinstance(sellers, Mapping) else capacities_of(sellers)
    by_buyer: dict[int, list[CandidatePair]] = {}
    for p in pairs:
        by_buyer.setdefault(p.buyer_id, []).append(p)
    buyers = sorted(by_buyer)
    choices = [[None] + sorted(by_buyer[b], key=lambda p: p.seller_id) for b in buyers]

    best, best_val = (), -math.inf
    for combo in itertools.product(*choices):
        chosen = [p for p in combo if p is not None]
        used: dict[int, list[float]] = {}
        ok = True
        for p in chosen:
            u = used.setdefault(p.seller_id, [0.0, 0.0])
            u[0] += p.bandwidth
            u[1] += p.compute
            cap = real.get(p.seller_id)
            if cap is None or u[0] > cap[0] + EPS or u[1] > cap[1] + EPS:
                ok = False
                break
        if not ok:
            continue
        val = math.fsum(p.margin for p in chosen)
        if val > best_val + EPS:
            best, best_val = tuple(chosen), val
    return outcome_from(best, real)


def check_feasible(outcome: ClearingOutcome, capacities: Mapping[int, tuple[float, float]]) -> list[str]:
    """Buyer exclusiveness and real capacity violations of an outcome (empty when feasible)."""
    problems = []
    seen = set()
    used: dict[int, list[float]] = {}
    for p in outcome.accepted:
        if p.buyer_id in seen:
            problems.append(f"buyer {p.buyer_id} matched twice")
        seen.add(p.buyer_id)
        u = used.setdefault(p.seller_id, [0.0, 0.0])
        u[0] += p.bandwidth
        u[1] += p.compute
    for sid, (bw, cpu) in used.items():
        cap = capacities[sid]
        if bw > cap[0] + EPS:
            problems.append(f"seller {sid} bandwidth {bw} > {cap[0]}")
        if cpu > cap[1] + EPS:
            problems.append(f"seller {sid} compute {cpu} > {cap[1]}")
    return problems


def synthetic_pair(buyer_id: int, seller_id: int, bandwidth: float, compute: float,
                   margin: float, verification: float = 0.5, ask: float = 1.0) -> CandidatePair:
    """Candidate pair with only the fields clearing looks at filled in meaningfully."""
    ev = PackageEvaluation(Package(bandwidth, compute, verification), rate=1.0, delay=0.1,
                           compliance_score=verification, privacy_risk=0.0, zt_cost=0.0,
                           effective_valuation=ask + margin, effective_ask=ask, margin=margin,
                           feasible=True)
    return CandidatePair(buyer_id, seller_id, ev)


def random_on_grid_instance(rng: np.random.Generator, max_buyers: int = 5, max_sellers: int = 3,
                            quantum: tuple[float, float] = (0.5, 0.5), max_quanta: int = 4,
                            pair_prob: float = 0.7, integer_margins: bool = False
                            ) -> tuple[list[CandidatePair], dict[int, tuple[float, float]]]:
    """Random clearing instance whose demands and capacities are whole multiples of ``quantum``.

    Integer margins make welfare ties common, which exercises the tie-break.
    """
    nb = int(rng.integers(1, max_buyers + 1))
    ns = int(rng.integers(1, max_sellers + 1))
    qb, qf = quantum
    pairs = []
    for b in range(nb):
        for s in range(ns):
            if rng.random() < pair_prob:
                m = float(rng.integers(1, 6)) if integer_margins else float(rng.uniform(0.1, 10.0))
                pairs.append(synthetic_pair(b, s, qb * int(rng.integers(1, max_quanta + 1)),
                                            qf * int(rng.integers(1, max_quanta + 1)), m))
    caps = {s: (qb * int(rng.integers(0, 2 * max_quanta + 1)), qf * int(rng.integers(0, 2 * max_quanta + 1)))
            for s in range(ns)}
    return pairs, caps


@dataclass(frozen=True)
class OracleMismatch:
    instance: int
    dp_welfare: float
    brute_welfare: float


def run_oracle(instances: int, seed: int, quantum: tuple[float, float] = (0.5, 0.5),
               max_buyers: int = 5, max_sellers: int = 3) -> list[OracleMismatch]:
    """Differential test of dp_clear against brute_force_clear on random on-grid instances."""
    rng = np.random.default_rng(seed)
    bad = []
    for k in range(instances):
        pairs, caps = random_on_grid_instance(rng, max_buyers, max_sellers, quantum,
                                              integer_margins=bool(k % 2))
        dp = dp_clear(quantize_resources(pairs, caps, quantum))
        bf = brute_force_clear(pairs, caps)
        if dp.welfare != bf.welfare or dp.accepted != bf.accepted:
            bad.append(OracleMismatch(k, dp.welfare, bf.welfare))
    return bad
