"""Executable checks of the mechanism's guarantees.

Each check returns a list of ViolationReport and is empty when the guarantee
holds. Checks run on in-memory round results or on the audit CSV files that
``run_plan`` writes, so finished experiments can be re-audited offline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .settlement import SettlementRecord

TOL = 1e-9


@dataclass(frozen=True)
class ViolationReport:
    invariant: str
    round: Optional[int]
    trade: Optional[tuple]  # (buyer_id, seller_id) or (seller_id,) for posture checks
    observed: dict = field(default_factory=dict)
    bound: dict = field(default_factory=dict)

    def __str__(self) -> str:
        where = f"round {self.round}" if self.round is not None else "round ?"
        return f"{self.invariant} @ {where} trade {self.trade}: observed {self.observed}, bound {self.bound}"


@dataclass(frozen=True)
class AuditedTrade:
    """A settlement plus where it happened."""

    round: Optional[int]
    buyer_id: Optional[int]
    seller_id: Optional[int]
    record: SettlementRecord


@dataclass(frozen=True)
class PostureStep:
    round: int
    seller_id: int
    posture: float
    rho_bar: float
    next_posture: float
    dynamic: bool = True


def _entries(items: Iterable) -> Iterator[AuditedTrade]:
    for it in items:
        if isinstance(it, AuditedTrade):
            yield it
        elif isinstance(it, SettlementRecord):
            yield AuditedTrade(None, None, None, it)
        else:
            raise TypeError(f"expected AuditedTrade or SettlementRecord, got {type(it).__name__}")


def _report(name: str, t: AuditedTrade, observed: dict, bound: dict) -> ViolationReport:
    return ViolationReport(name, t.round, (t.buyer_id, t.seller_id), observed, bound)


def check_prop1(settlements: Iterable) -> list[ViolationReport]:
    """Midpoint pricing gives each side exactly half of a strictly positive margin."""
    out = []
    for t in _entries(settlements):
        r = t.record
        half = r.margin / 2.0
        buyer_gain, seller_gain = r.effective_valuation - r.price, r.price - r.effective_ask
        if not r.margin > 0:
            out.append(_report("prop1.margin", t, {"margin": r.margin}, {"margin": "> 0"}))
        if abs(buyer_gain - half) > TOL or abs(seller_gain - half) > TOL:
            out.append(_report("prop1.split", t,
                               {"buyer_gain": buyer_gain, "seller_gain": seller_gain},
                               {"half_margin": half, "tol": TOL}))
    return out


def check_prop2(settlements: Iterable, deposit_cap_ratio: float) -> list[ViolationReport]:
    """Seller utility after settlement stays at or above (1/2 - cap ratio) of the margin."""
    out = []
    for t in _entries(settlements):
        r = t.record
        floor = (0.5 - deposit_cap_ratio) * r.margin
        if r.seller_utility < floor - TOL:
            out.append(_report("prop2.seller_floor", t, {"seller_utility": r.seller_utility},
                               {"floor": floor, "deposit_cap_ratio": deposit_cap_ratio}))
    return out


def check_budget(settlements: Iterable) -> list[ViolationReport]:
    """No subsidy and exact money conservation per trade."""
    out = []
    for t in _entries(settlements):
        r = t.record
        if r.platform_cut < -TOL:
            out.append(_report("budget.platform_revenue", t, {"platform_cut": r.platform_cut}, {"min": 0.0}))
        identities = {
            "deposit_split": (r.refunded + r.forfeited, r.deposit),
            "forfeit_split": (r.buyer_compensation + r.platform_cut, r.forfeited),
            "refund": (r.refunded, r.refund_ratio * r.deposit),
            "payment": (r.seller_receipt + r.buyer_compensation + r.platform_cut, r.price),
            "buyer_utility": (r.buyer_utility, r.effective_valuation - r.price + r.buyer_compensation),
            "seller_utility": (r.seller_utility, r.price - r.effective_ask - r.forfeited),
        }
        for name, (lhs, rhs) in identities.items():
            if abs(lhs - rhs) > TOL:
                out.append(_report(f"budget.{name}", t, {"value": lhs}, {"expected": rhs, "tol": TOL}))
    return out


def check_posture_steps(steps: Iterable[PostureStep]) -> list[ViolationReport]:
    """Sign law and boundedness of the posture update.

    The posture moves toward the averaged refund ratio: up when it is above
    the current posture, down when below, not at all when equal, and never
    past it. Steps of static-posture mechanisms must leave it unchanged.
    """
    out = []
    for s in steps:
        if not s.dynamic:
            if s.next_posture != s.posture:
                out.append(ViolationReport("posture.static", s.round, (s.seller_id,),
                                           {"next_posture": s.next_posture}, {"posture": s.posture}))
            continue
        gap, move = s.rho_bar - s.posture, s.next_posture - s.posture
        bad_sign = ((gap > TOL and not move > 0) or (gap < -TOL and not move < 0)
                    or (abs(gap) <= TOL and abs(move) > TOL))
        if bad_sign:
            out.append(ViolationReport("prop3.sign", s.round, (s.seller_id,),
                                       {"move": move}, {"rho_bar_minus_q": gap}))
        lo, hi = min(s.posture, s.rho_bar), max(s.posture, s.rho_bar)
        if not lo - TOL <= s.next_posture <= hi + TOL:
            out.append(ViolationReport("prop3.bounded", s.round, (s.seller_id,),
                                       {"next_posture": s.next_posture}, {"low": lo, "high": hi}))
    return out


def posture_steps(history: Sequence[tuple[int, int, float, float]],
                  final: dict[int, float], dynamic: bool = True) -> list[PostureStep]:
    """Pair each ledger history row with the posture the seller held one round later."""
    by_seller: dict[int, list[tuple[int, float, float]]] = {}
    for rnd, sid, q, rho_bar in history:
        by_seller.setdefault(sid, []).append((rnd, q, rho_bar))
    steps = []
    for sid, rows in sorted(by_seller.items()):
        for k, (rnd, q, rho_bar) in enumerate(rows):
            nxt = rows[k + 1][1] if k + 1 < len(rows) else final[sid]
            steps.append(PostureStep(rnd, sid, q, rho_bar, nxt, dynamic))
    return steps


def audited_trades(round_results: Iterable) -> list[AuditedTrade]:
    """AuditedTrade entries from ``mechanisms.RoundResult`` objects."""
    return [AuditedTrade(rr.round_index, tr.pair.buyer_id, tr.pair.seller_id, tr.settlement)
            for rr in round_results for tr in rr.trades]


_RECORD_FIELDS = [f for f in SettlementRecord.__dataclass_fields__]


def read_audit_csv(path: str | Path) -> list[tuple[str, AuditedTrade]]:
    """Load ``trades_audit.csv`` rows as (mechanism, AuditedTrade)."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    out = []
    with fh:
        reader = csv.DictReader(fh)
        missing = set(_RECORD_FIELDS + ["mechanism", "round", "buyer_id", "seller_id"]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rec = SettlementRecord(**{k: float(row[k]) for k in _RECORD_FIELDS})
            out.append((row["mechanism"], AuditedTrade(int(row["round"]), int(row["buyer_id"]),
                                                       int(row["seller_id"]), rec)))
    return out


def read_posture_csv(path: str | Path) -> list[tuple[str, PostureStep]]:
    """Load ``postures.csv`` rows as (mechanism, PostureStep)."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        return [(row["mechanism"], PostureStep(int(row["round"]), int(row["seller_id"]), float(row["posture"]),
                                               float(row["rho_bar"]), float(row["next_posture"]),
                                               row.get("dynamic", "1") == "1"))
                for row in csv.DictReader(fh)]


def check_all(trades: Sequence[AuditedTrade], deposit_cap_ratio: float,
              steps: Sequence[PostureStep] = ()) -> dict[str, list[ViolationReport]]:
    return {
        "prop1": check_prop1(trades),
        "prop2": check_prop2(trades, deposit_cap_ratio),
        "budget": check_budget(trades),
        "prop3": check_posture_steps(steps),
    }
