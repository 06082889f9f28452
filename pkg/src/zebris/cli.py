"""Command line entry point: ``zebris run|validate|oracle|check``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .clearing import run_oracle
from .config import load_yaml
from .harness import RunPlan, plan_from_dict
from .invariants import check_all, read_audit_csv, read_posture_csv
from .market_model import ConfigError, ScenarioConfig
from .mechanisms import MECHANISMS

log = logging.getLogger("zebris")


def _load_plan(path: Optional[str]) -> RunPlan:
    if path is None:
        return RunPlan(scenario=ScenarioConfig())
    return plan_from_dict(load_yaml(path), Path(path).parent)


def _apply_overrides(plan: RunPlan, args: argparse.Namespace) -> RunPlan:
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.mechanism:
        changes["mechanisms"] = tuple(args.mechanism)
    if args.buyers:
        changes["buyer_pool_sizes"] = tuple(args.buyers)
    if args.episodes is not None:
        changes["episodes_per_cell"] = args.episodes
    if args.no_audit:
        changes["write_audit"] = False
    return dataclasses.replace(plan, **changes) if changes else plan


def cmd_run(args: argparse.Namespace) -> int:
    from .harness import run_plan

    plan = _apply_overrides(_load_plan(args.plan), args)
    n = len(plan.mechanisms) * len(plan.buyer_pool_sizes) * plan.episodes_per_cell
    log.info("running %d episodes into %s", n, plan.output_dir)
    table = run_plan(plan, progress=True)
    for (mech, pool), stats in table.items():
        cells = " ".join(f"{m}={s.mean:.4g}" for m, s in stats.items() if s.mean is not None)
        print(f"{mech:9s} pool={pool:<3d} {cells}")
    print(f"results written to {plan.output_dir}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    plan = _apply_overrides(_load_plan(args.plan), args)
    n = len(plan.mechanisms) * len(plan.buyer_pool_sizes) * plan.episodes_per_cell
    print(f"ok: {len(plan.mechanisms)} mechanisms x {len(plan.buyer_pool_sizes)} pool sizes "
          f"x {plan.episodes_per_cell} episodes = {n} episodes")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    bad = run_oracle(args.instances, args.seed if args.seed is not None else 0,
                     max_buyers=args.max_buyers, max_sellers=args.max_sellers)
    for b in bad[:20]:
        print(f"instance {b.instance}: dp {b.dp_welfare!r} vs brute force {b.brute_welfare!r}")
    print(f"{args.instances - len(bad)}/{args.instances} instances agree")
    return 1 if bad else 0


def cmd_check(args: argparse.Namespace) -> int:
    trades = read_audit_csv(args.audit)
    postures = Path(args.postures) if args.postures else Path(args.audit).with_name("postures.csv")
    steps = read_posture_csv(postures) if postures.exists() else []
    if not postures.exists():
        print(f"note: {postures} not found, posture sign law not checked")
    lam = args.deposit_cap_ratio
    if lam is None:
        resolved = Path(args.audit).with_name("resolved_config.yaml")
        lam = ScenarioConfig().mechanism.deposit_cap_ratio
        if resolved.exists():
            lam = load_yaml(resolved).get("scenario", {}).get("mechanism", {}).get("deposit_cap_ratio", lam)
    total = 0
    for name in sorted({m for m, _ in trades} | {m for m, _ in steps}):
        res = check_all([t for m, t in trades if m == name], lam, [s for m, s in steps if m == name])
        counts = {k: len(v) for k, v in res.items()}
        total += sum(counts.values())
        print(f"{name:9s} trades={sum(1 for m, _ in trades if m == name):<7d} "
              + " ".join(f"{k}={v}" for k, v in counts.items()))
        for reports in res.values():
            for r in reports[:5]:
                print(f"  {r}")
    print("no violations" if total == 0 else f"{total} violations")
    return 1 if total else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zebris", description="Zero-trust edge service market simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def plan_args(sp):
        sp.add_argument("plan", nargs="?", help="YAML plan file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="base seed of the plan")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--mechanism", action="append", choices=list(MECHANISMS),
                        help="mechanism to run; repeatable")
        sp.add_argument("--buyers", type=int, action="append", help="buyer pool size; repeatable")
        sp.add_argument("--episodes", type=int, help="episodes per (mechanism, pool size) cell")
        sp.add_argument("--no-audit", action="store_true", help="skip trades_audit.csv and postures.csv")

    sp = sub.add_parser("run", help="run a Monte Carlo plan and write results")
    plan_args(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="check a plan file without running it")
    plan_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("oracle", help="compare the DP with brute force on random instances")
    sp.add_argument("--instances", type=int, default=500)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--max-buyers", type=int, default=5)
    sp.add_argument("--max-sellers", type=int, default=3)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("check", help="re-check settlement invariants on an audit log")
    sp.add_argument("audit", help="trades_audit.csv written by 'run'")
    sp.add_argument("--postures", help="postures.csv (default: next to the audit file)")
    sp.add_argument("--deposit-cap-ratio", type=float,
                    help="deposit cap ratio (default: from resolved_config.yaml next to the audit file)")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
