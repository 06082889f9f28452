"""YAML scenario / plan files.

Layout::

    scenario:            # any ScenarioConfig field
      num_sellers: 6
      activation_profile_file: profile.csv   # optional, relative to the file
      mechanism: {...}   # MechanismConfig fields
      effort: {...}      # EffortModel fields
    plan:
      mechanisms: [ZEBRIS, ResOnly]
      buyer_pool_sizes: [10, 20]
      episodes_per_cell: 50
      base_seed: 2026
      output_dir: results
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any, Mapping

import yaml

from .market_model import (
    ConfigError,
    EffortModel,
    MechanismConfig,
    ScenarioConfig,
    load_activation_profile,
)

_TUPLE_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)
                 if f.name.endswith("_range") or f.name in
                 ("verification_levels", "package_grid", "resource_quantum", "activation_profile")}


def _check_keys(cls, data: Mapping[str, Any], where: str):
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return data


def scenario_from_dict(data: Mapping[str, Any] | None, base_dir: Path | None = None) -> ScenarioConfig:
    data = dict(data or {})
    mech = data.pop("mechanism", None) or {}
    effort = data.pop("effort", None) or {}
    profile_file = data.pop("activation_profile_file", None)
    if profile_file is not None:
        path = Path(profile_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        data["activation_profile"] = load_activation_profile(path)
    _check_keys(ScenarioConfig, data, "scenario")
    mech = dict(_check_keys(MechanismConfig, mech, "scenario.mechanism"))
    mech.pop("compliance_fn", None)
    mech.pop("risk_fn", None)
    if "refund_weights" in mech:
        mech["refund_weights"] = tuple(mech["refund_weights"])
    _check_keys(EffortModel, effort, "scenario.effort")
    for k in _TUPLE_FIELDS & set(data):
        if data[k] is not None:
            data[k] = tuple(data[k])
    try:
        return ScenarioConfig(**data, mechanism=MechanismConfig(**mech), effort=EffortModel(**effort))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(scenario: ScenarioConfig) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(scenario):
        v = getattr(scenario, f.name)
        if dataclasses.is_dataclass(v):
            v = {g.name: getattr(v, g.name) for g in dataclasses.fields(v)
                 if g.name not in ("compliance_fn", "risk_fn")}
            v = {k: list(x) if isinstance(x, tuple) else x for k, x in v.items()}
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def load_yaml(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_scenario(path: str | Path) -> ScenarioConfig:
    data = load_yaml(path)
    return scenario_from_dict(data.get("scenario", data), Path(path).parent)
