"""Round, episode and Monte Carlo summaries of the six market metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .clearing import ClearingOutcome

METRICS = ("SW", "ATR", "AED", "APRC", "ACS", "SU", "PR")
Z95 = 1.96


@dataclass(frozen=True)
class RoundMetrics:
    social_welfare: float
    accepted_trading_ratio: float
    avg_delay: Optional[float]
    avg_privacy_cost: Optional[float]
    avg_compliance: Optional[float]
    avg_seller_utility: Optional[float]
    platform_revenue: float
    trades: int
    active_buyers: int

    def as_row(self) -> dict:
        return {
            "SW": self.social_welfare,
            "ATR": self.accepted_trading_ratio,
            "AED": self.avg_delay,
            "APRC": self.avg_privacy_cost,
            "ACS": self.avg_compliance,
            "SU": self.avg_seller_utility,
            "PR": self.platform_revenue,
        }


def _mean(xs: Sequence[float]) -> Optional[float]:
    return math.fsum(xs) / len(xs) if xs else None


def compute_round_metrics(outcome: ClearingOutcome, trades: Sequence, active_buyers: int) -> RoundMetrics:
    """Metrics of one round.

    ``trades`` are the settled trades (see ``mechanisms.Trade``) aligned with
    ``outcome.accepted``. Welfare counts the full-model margin of each
    accepted package; averages over an empty round are None.
    """
    if len(trades) != len(outcome.accepted):
        raise RuntimeError(f"{len(trades)} settlements for {len(outcome.accepted)} accepted trades")
    n = len(trades)
    welfare = math.fsum(t.pair.reference.margin for t in trades)
    return RoundMetrics(
        social_welfare=welfare,
        accepted_trading_ratio=n / active_buyers if active_buyers else 0.0,
        avg_delay=_mean([t.measurement.realized_delay for t in trades]),
        avg_privacy_cost=_mean([t.privacy_penalty * t.pair.reference.privacy_risk for t in trades]),
        avg_compliance=_mean([t.settlement.refund_ratio for t in trades]),
        avg_seller_utility=_mean([t.settlement.seller_utility for t in trades]),
        platform_revenue=math.fsum(t.settlement.platform_cut for t in trades),
        trades=n,
        active_buyers=active_buyers,
    )


def episode_summary(rounds: Iterable[RoundMetrics]) -> dict[str, Optional[float]]:
    """Per-metric mean over rounds, skipping rounds where the metric is undefined."""
    cols: dict[str, list[float]] = {k: [] for k in METRICS}
    for r in rounds:
        for k, v in r.as_row().items():
            if v is not None:
                cols[k].append(v)
    return {k: _mean(v) for k, v in cols.items()}


@dataclass(frozen=True)
class MetricStats:
    mean: Optional[float]
    sd: Optional[float]
    ci95: Optional[float]
    n: int


def stats(values: Sequence[Optional[float]]) -> MetricStats:
    xs = np.array([v for v in values if v is not None], dtype=float)
    if xs.size == 0:
        return MetricStats(None, None, None, 0)
    sd = float(xs.std(ddof=1)) if xs.size > 1 else 0.0
    return MetricStats(float(xs.mean()), sd, Z95 * sd / math.sqrt(xs.size), int(xs.size))


def aggregate_episodes(series: Mapping[tuple[str, int], Sequence[Mapping[str, Optional[float]]]]
                       ) -> dict[tuple[str, int], dict[str, MetricStats]]:
    """Mean, sample sd and 95% half-width across episodes, per (mechanism, pool size)."""
    out = {}
    for key in series:
        episodes = series[key]
        if not episodes:
            raise ValueError(f"no episodes for cell {key}")
        out[key] = {m: stats([ep.get(m) for ep in episodes]) for m in METRICS}
    return out


def summary_rows(table: Mapping[tuple[str, int], Mapping[str, MetricStats]]) -> list[dict]:
    rows = []
    for (mech, pool), per_metric in table.items():
        for m in METRICS:
            s = per_metric[m]
            rows.append({"mechanism": mech, "buyer_pool_size": pool, "metric": m, **asdict(s)})
    return rows
