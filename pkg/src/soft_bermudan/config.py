"""Run configuration: TOML files (or a manifest's embedded config) with strict validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .errors import ConfigurationError
from .market import ExerciseSchedule, GbmModel, RewardSpec
from .td_solver import SolverConfig

SOLVER_KINDS = ("td", "pi", "game-pi", "lattice", "stopping", "dual")

# section -> {key: accepted types}
_NUM = (int, float)
SCHEMA = {
    "model": {"initial": (int, float, list), "dimension": (int,), "rate": _NUM, "dividend": _NUM,
              "volatility": _NUM, "correlation": _NUM},
    "schedule": {"dates": (list,), "count": (int,), "maturity": _NUM},
    "reward": {"kind": (str,), "strike": _NUM, "cap": _NUM, "upper_premium": _NUM},
    "solver": {"kind": (str,), "paths": (int,), "antithetic": (bool,), "substeps": (int,),
               "estimator": (str,), "degree": (int,), "interaction": (int,), "hidden": (list,),
               "activation": (str,), "epochs": (int,), "batch": (int,), "learning_rate": _NUM,
               "surface_learning_rate": _NUM, "optimizer": (str,), "ridge": _NUM,
               "payoff_feature": (bool,), "sorted_features": (bool,), "surface_degree": (int,),
               "surface_ridge": _NUM, "surface_paths": (int,), "resample_surface": (bool,),
               "fit_surface": (bool,), "validation_fraction": _NUM, "iterations": (int,),
               "lattice_steps": (int,), "stopping_paths": (int,), "eval_paths": (int,)},
    "output": {"dir": (str,)},
}
TOP_LEVEL = {"lambda_list": (list,), "seed": (int,)}
REQUIRED = {"model": ("rate", "volatility", "initial"), "schedule": ("maturity",), "reward": ("kind",)}


@dataclass
class RunConfig:
    model: GbmModel
    schedule: ExerciseSchedule
    reward: RewardSpec
    solver_kind: str
    solver: SolverConfig
    lambda_list: list
    seed: int
    upper_premium: float | None = None
    lattice_steps: int | None = None
    stopping_paths: int = 100_000
    eval_paths: int = 65536
    output_dir: str = "."
    raw: dict = field(default_factory=dict)

    def upper_reward(self) -> RewardSpec:
        if self.upper_premium is None:
            raise ConfigurationError("reward.upper_premium: required for game runs")
        return self.reward.with_premium(self.upper_premium, self.schedule.maturity)

    def content_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _check_types(raw: dict) -> list:
    errors = []
    for key, value in raw.items():
        if key in TOP_LEVEL:
            if not isinstance(value, TOP_LEVEL[key]):
                errors.append(f"{key}: expected {TOP_LEVEL[key][0].__name__}")
            continue
        if key not in SCHEMA:
            errors.append(f"{key}: unknown section")
            continue
        if not isinstance(value, dict):
            errors.append(f"{key}: expected a table")
            continue
        for k, v in value.items():
            allowed = SCHEMA[key].get(k)
            if allowed is None:
                errors.append(f"{key}.{k}: unknown key")
            elif isinstance(v, bool) and bool not in allowed:
                errors.append(f"{key}.{k}: booleans are not accepted here")
            elif not isinstance(v, allowed):
                errors.append(f"{key}.{k}: expected {' or '.join(t.__name__ for t in allowed)}")
    for sec, keys in REQUIRED.items():
        for k in keys:
            if k not in raw.get(sec, {}):
                errors.append(f"{sec}.{k}: required")
    sched = raw.get("schedule", {})
    if "dates" not in sched and "count" not in sched:
        errors.append("schedule: give either dates or count")
    return errors


def parse_config(raw: dict) -> RunConfig:
    """Validate a config mapping and build the domain objects; errors list every bad field."""
    errors = _check_types(raw)
    if errors:
        raise ConfigurationError("; ".join(errors))
    m = raw["model"]
    init = m["initial"]
    if isinstance(init, list):
        initial = tuple(float(v) for v in init)
    else:
        initial = (float(init),) * int(m.get("dimension", 1))
    s = raw["schedule"]
    r = raw["reward"]
    sv = dict(raw.get("solver", {}))
    kind = sv.pop("kind", "td")
    if kind not in SOLVER_KINDS:
        raise ConfigurationError(f"solver.kind: must be one of {', '.join(SOLVER_KINDS)}")
    lattice_steps = sv.pop("lattice_steps", None)
    stopping_paths = sv.pop("stopping_paths", 100_000)
    eval_paths = sv.pop("eval_paths", 65536)
    seed = int(raw.get("seed", 0))
    lambdas = [float(v) for v in raw.get("lambda_list", [0.1, 0.01, 0.001])]
    if any(not v > 0 for v in lambdas):
        raise ConfigurationError("lambda_list: every lambda must be positive")
    try:
        model = GbmModel(initial, float(m["rate"]), float(m.get("dividend", 0.0)),
                         float(m["volatility"]), float(m.get("correlation", 0.0)))
        if "dates" in s:
            schedule = ExerciseSchedule(tuple(s["dates"]), float(s["maturity"]))
        else:
            schedule = ExerciseSchedule.uniform(int(s["count"]), float(s["maturity"]))
        reward = RewardSpec(r["kind"], float(r.get("strike", 100.0)), model.rate,
                            cap=r.get("cap"))
        solver = SolverConfig(seed=seed, **sv)
    except ConfigurationError as exc:
        raise ConfigurationError(str(exc)) from exc
    except TypeError as exc:
        raise ConfigurationError(f"solver: {exc}") from exc
    return RunConfig(model, schedule, reward, kind, solver, lambdas, seed, r.get("upper_premium"),
                     lattice_steps, stopping_paths, eval_paths,
                     raw.get("output", {}).get("dir", "."), raw)


def load_config(path: str | Path) -> RunConfig:
    """Read a TOML config, or the ``config`` block of a JSON run manifest."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    if p.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{p}: invalid JSON: {exc}") from exc
        raw = raw.get("config", raw)
    else:
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{p}: invalid TOML: {exc}") from exc
    return parse_config(raw)


def with_overrides(raw: dict, **overrides) -> dict:
    """Copy of ``raw`` with dotted-key overrides applied ('solver.paths' -> raw['solver']['paths'])."""
    out = json.loads(json.dumps(raw))
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out
