"""Episode runner and Monte Carlo plan sweeps.

Every episode owns two independent random streams derived from its seed: one
for market generation and one for runtime compliance draws. Runtime uniforms
are reserved per pool buyer and round, so all mechanisms run on identical
markets and identical compliance noise for the same seed.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import yaml

from .clearing import StateSpaceExceeded
from .config import load_yaml, scenario_from_dict, scenario_to_dict
from .invariants import posture_steps
from .market_model import ConfigError, ScenarioConfig, init_sellers, sample_round
from .mechanisms import MECHANISMS, MechanismSpec, RoundResult, get_mechanism, run_round
from .metrics import RoundMetrics, aggregate_episodes, compute_round_metrics, episode_summary, summary_rows
from .posture import PostureLedger
from .runtime_sim import uniforms_per_trade

log = logging.getLogger(__name__)

DEFAULT_POOL_SIZES = (10, 15, 20, 25, 30)

AUDIT_COLUMNS = [
    "mechanism", "buyer_pool_size", "episode", "round", "buyer_id", "seller_id",
    "bandwidth", "compute", "verification", "posture", "margin", "welfare_margin",
    "effective_valuation", "effective_ask", "price", "deposit",
    "auth_score", "policy_score", "sla_score", "refund_ratio",
    "refunded", "forfeited", "buyer_compensation", "platform_cut",
    "buyer_utility", "seller_utility", "planned_delay", "realized_delay",
]
POSTURE_COLUMNS = ["mechanism", "buyer_pool_size", "episode", "round", "seller_id", "posture", "rho_bar",
                   "next_posture", "dynamic"]
SUMMARY_COLUMNS = ["mechanism", "buyer_pool_size", "metric", "mean", "sd", "ci95", "n"]
EPISODE_COLUMNS = ["mechanism", "buyer_pool_size", "episode", "seed", "SW", "ATR", "AED", "APRC", "ACS", "SU", "PR"]


class EpisodeError(RuntimeError):
    pass


@dataclass
class EpisodeResult:
    mechanism: str
    seed: int
    rounds: list[RoundMetrics]
    ledger: PostureLedger
    round_results: list[RoundResult] = field(default_factory=list)

    def summary(self) -> dict:
        return episode_summary(self.rounds)


def stable_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def cell_seed(base_seed: int, buyer_pool_size: int, episode: int) -> int:
    """Seed of one Monte Carlo cell; the mechanism is left out so runs are paired across mechanisms."""
    return (base_seed ^ stable_hash(f"pool={buyer_pool_size}/episode={episode}")) & (2**64 - 1)


def run_episode(mechanism: MechanismSpec | str, scenario: ScenarioConfig, seed: int,
                keep_rounds: bool = False) -> EpisodeResult:
    if isinstance(mechanism, str):
        mechanism = get_mechanism(mechanism)
    market_ss, runtime_ss = np.random.SeedSequence(seed).spawn(2)
    market_rng = np.random.default_rng(market_ss)
    runtime_rng = np.random.default_rng(runtime_ss)

    profiles = init_sellers(scenario, market_rng)
    ledger = PostureLedger({p.seller_id: p.initial_posture for p in profiles})
    k = uniforms_per_trade(scenario.effort)
    rounds, results = [], []
    for t in range(scenario.horizon):
        sample = sample_round(scenario, market_rng, t, profiles, ledger.current())
        block = runtime_rng.random((scenario.buyer_pool_size, k))
        try:
            res = run_round(mechanism, sample, scenario, ledger, block.__getitem__)
        except StateSpaceExceeded as exc:
            raise EpisodeError(f"{mechanism.name}, seed {seed}, round {t}: {exc}") from exc
        rounds.append(compute_round_metrics(res.outcome, res.trades, res.active_buyers))
        if keep_rounds:
            results.append(res)
    return EpisodeResult(mechanism.name, seed, rounds, ledger, results)


@dataclass(frozen=True)
class RunPlan:
    scenario: ScenarioConfig
    mechanisms: tuple[str, ...] = tuple(MECHANISMS)
    buyer_pool_sizes: tuple[int, ...] = DEFAULT_POOL_SIZES
    episodes_per_cell: int = 50
    base_seed: int = 2026
    output_dir: str = "results"
    write_audit: bool = True
    resonly_enforce_deadline: bool = True

    def __post_init__(self) -> None:
        if self.episodes_per_cell < 1:
            raise ConfigError("episodes_per_cell must be >= 1")
        bad = [m for m in self.mechanisms if m not in MECHANISMS]
        if bad:
            raise ConfigError(f"unknown mechanism(s) {bad}; valid names: {', '.join(MECHANISMS)}")
        if not self.mechanisms or not self.buyer_pool_sizes:
            raise ConfigError("plan needs at least one mechanism and one buyer pool size")
        if any(n < 0 for n in self.buyer_pool_sizes):
            raise ConfigError("buyer pool sizes must be >= 0")


def plan_from_dict(data: dict, base_dir: Path | None = None) -> RunPlan:
    scenario = scenario_from_dict(data.get("scenario"), base_dir)
    p = dict(data.get("plan") or {})
    known = {f.name for f in dataclasses.fields(RunPlan)} - {"scenario"}
    unknown = set(p) - known
    if unknown:
        raise ConfigError(f"plan: unknown keys {sorted(unknown)}")
    for k in ("mechanisms", "buyer_pool_sizes"):
        if k in p:
            p[k] = tuple(p[k])
    return RunPlan(scenario=scenario, **p)


def load_plan(path: str | Path) -> RunPlan:
    return plan_from_dict(load_yaml(path), Path(path).parent)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _audit_rows(name: str, pool: int, episode: int, res: RoundResult) -> Iterable[list]:
    for tr in res.trades:
        p, s, ev = tr.pair, tr.settlement, tr.pair.evaluation
        yield [name, pool, episode, res.round_index, p.buyer_id, p.seller_id,
               ev.package.bandwidth, ev.package.compute, ev.package.verification, tr.posture,
               ev.margin, p.reference.margin, s.effective_valuation, s.effective_ask,
               s.price, s.deposit, s.auth_score, s.policy_score, s.sla_score, s.refund_ratio,
               s.refunded, s.forfeited, s.buyer_compensation, s.platform_cut,
               s.buyer_utility, s.seller_utility, p.reference.delay, tr.measurement.realized_delay]


class _Writer:
    def __init__(self, path: Path, header: Sequence[str]):
        self.path = path
        try:
            self.fh = open(path, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        self.w = csv.writer(self.fh, lineterminator="\n")
        self.w.writerow(header)

    def row(self, values: Sequence) -> None:
        self.w.writerow([_fmt(v) for v in values])

    def close(self) -> None:
        self.fh.close()


def run_plan(plan: RunPlan, progress: bool = False) -> dict[tuple[str, int], dict]:
    """Run every (mechanism, pool size, episode) cell and write the result files.

    Returns the aggregated summary table.
    """
    out = Path(plan.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    specs = {m: get_mechanism(m, plan.resonly_enforce_deadline) for m in plan.mechanisms}

    resolved = {"scenario": scenario_to_dict(plan.scenario),
                "plan": {f.name: (list(v) if isinstance(v, tuple) else v)
                         for f in dataclasses.fields(plan) if f.name != "scenario"
                         for v in [getattr(plan, f.name)]}}
    with open(out / "resolved_config.yaml", "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=False)

    episodes_w = _Writer(out / "episodes.csv", EPISODE_COLUMNS)
    audit_w = _Writer(out / "trades_audit.csv", AUDIT_COLUMNS) if plan.write_audit else None
    posture_w = _Writer(out / "postures.csv", POSTURE_COLUMNS) if plan.write_audit else None
    series: dict[tuple[str, int], list[dict]] = {}
    try:
        for name, spec in specs.items():
            for pool in plan.buyer_pool_sizes:
                scenario = dataclasses.replace(plan.scenario, buyer_pool_size=pool)
                cell = series.setdefault((name, pool), [])
                for ep in range(plan.episodes_per_cell):
                    seed = cell_seed(plan.base_seed, pool, ep)
                    res = run_episode(spec, scenario, seed, keep_rounds=plan.write_audit)
                    summ = res.summary()
                    cell.append(summ)
                    episodes_w.row([name, pool, ep, seed] + [summ[m] for m in EPISODE_COLUMNS[4:]])
                    if audit_w is not None:
                        for rr in res.round_results:
                            for row in _audit_rows(name, pool, ep, rr):
                                audit_w.row(row)
                        for st in posture_steps(res.ledger.history, res.ledger.postures, spec.posture_dynamic):
                            posture_w.row([name, pool, ep, st.round, st.seller_id, st.posture, st.rho_bar,
                                           st.next_posture, int(st.dynamic)])
                if progress:
                    log.info("finished %s pool=%d", name, pool)
    finally:
        episodes_w.close()
        if audit_w is not None:
            audit_w.close()
            posture_w.close()

    table = aggregate_episodes(series)
    rows = summary_rows(table)
    sw = _Writer(out / "summary.csv", SUMMARY_COLUMNS)
    for r in rows:
        sw.row([r[c] for c in SUMMARY_COLUMNS])
    sw.close()
    with open(out / "summary.json", "w") as fh:
        json.dump(rows, fh, indent=1)
    return table
