"""Experiment configuration: YAML loading, dotted-path overrides, config
hashing, and the mode-target file schema.

One structured file drives a whole batch; CLI flags override individual
fields so 500-run sweeps stay reproducible and diffable. The config hash
covers exactly the fields that influence results (output location, worker
count and trace selection are excluded).
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .belief import ModeTarget, ModeTargetSet
from .errors import ConfigError, InvalidInputError
from .gaussmath import Gaussian
from .planner import PlannerConfig
from .world import INTERSECTION, LANE_MERGE

VALID_SCENARIOS = (LANE_MERGE, INTERSECTION)
VALID_PLANNERS = ("ours", "passive", "conservative")

REQUIRED_FIELDS = (
    "experiment.runs",
    "experiment.master_seed",
    "experiment.scenario",
    "experiment.planner",
)

DEFAULTS: dict[str, dict[str, Any]] = {
    "experiment": {
        "runs": None,
        "master_seed": None,
        "scenario": None,          # one name or a list
        "planner": None,           # one name or a list
        "comparison_mode": True,
        "out_dir": None,           # None: --out flag or PROBEPLAN_OUT or ./results
        "workers": 1,
        "trace_seeds": [],
    },
    "planner": {name: None for name in (
        "horizon_steps", "dt", "entropy_weight", "cvar_level", "rollout_count",
        "risk_cap", "mode_activation_eps", "accel_bounds", "yaw_rate_bounds",
        "discount", "response_gain", "accel_noise_var", "obs_samples",
        "ref_speed", "obs_noise_std", "features", "solver_iters", "solver_step",
        "solver_segments", "solver_inits", "penalty_weight", "probe_grid_size",
        "literal_probe_sign", "pi_weighted_entropy", "adaptive_obs_samples",
    )},
    "human": {
        "observation_noise_std": 0.3,
        "pinned_intent": None,
        "risk_threshold": None,
    },
    "scenario": {
        "t_max": None,
        "mode_targets_file": None,
    },
}

# Fields with no effect on simulated results, excluded from the hash.
_NON_SEMANTIC = {("experiment", "out_dir"), ("experiment", "workers"),
                 ("experiment", "trace_seeds")}


def _merge_section(section: str, given: dict, out: dict) -> None:
    known = DEFAULTS[section]
    for key, value in given.items():
        if key not in known:
            raise ConfigError(f"unknown field {section}.{key}")
        out[section][key] = value


def load_config(path: str | Path, overrides: list[str] | None = None) -> dict:
    """Load and validate an experiment config; returns the resolved dict."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section {section}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {section} must be a mapping")
        _merge_section(section, body, cfg)
    for item in overrides or []:
        apply_override(cfg, item)
    validate_config(cfg)
    return cfg


def apply_override(cfg: dict, item: str) -> None:
    """Apply one dotted-path override such as planner.entropy_weight=0.25."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.field=value")
    dotted, _, raw_value = item.partition("=")
    parts = dotted.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"override path {dotted!r} must be section.field")
    section, field = parts
    if section not in DEFAULTS or field not in DEFAULTS[section]:
        raise ConfigError(f"unknown field {section}.{field}")
    cfg[section][field] = yaml.safe_load(raw_value)


def validate_config(cfg: dict) -> None:
    for dotted in REQUIRED_FIELDS:
        section, field = dotted.split(".")
        if cfg[section][field] is None:
            raise ConfigError(f"missing required field {dotted}")
    exp = cfg["experiment"]
    if not isinstance(exp["runs"], int) or exp["runs"] < 1:
        raise ConfigError("experiment.runs must be a positive integer")
    if not isinstance(exp["master_seed"], int):
        raise ConfigError("experiment.master_seed must be an integer")
    for name in scenario_list(cfg):
        if name not in VALID_SCENARIOS:
            raise ConfigError(
                f"experiment.scenario {name!r} not one of {VALID_SCENARIOS}"
            )
    for name in planner_list(cfg):
        if name not in VALID_PLANNERS:
            raise ConfigError(
                f"experiment.planner {name!r} not one of {VALID_PLANNERS}"
            )
    if not isinstance(exp["trace_seeds"], list):
        raise ConfigError("experiment.trace_seeds must be a list of run indices")


def _as_list(value) -> list[str]:
    return [value] if isinstance(value, str) else list(value)


def scenario_list(cfg: dict) -> list[str]:
    return _as_list(cfg["experiment"]["scenario"])


def planner_list(cfg: dict) -> list[str]:
    return _as_list(cfg["experiment"]["planner"])


def build_planner_config(cfg: dict, scenario: str) -> PlannerConfig:
    """PlannerConfig from the planner section; unset fields keep their
    defaults, except ref_speed which defaults per scenario."""
    from .scenario import DEFAULT_REF_SPEED  # local import to avoid a cycle

    kwargs = {}
    for key, value in cfg["planner"].items():
        if value is None:
            continue
        if key in ("features", "accel_bounds", "yaw_rate_bounds"):
            value = tuple(value)
        kwargs[key] = value
    kwargs.setdefault("ref_speed", DEFAULT_REF_SPEED[scenario])
    try:
        return PlannerConfig(**kwargs)
    except (InvalidInputError, TypeError) as e:
        raise ConfigError(f"invalid planner config: {e}") from None


def build_run_config(cfg: dict, scenario: str, planner: str):
    from .scenario import RunConfig  # local import to avoid a cycle

    targets = None
    tfile = cfg["scenario"]["mode_targets_file"]
    if tfile:
        targets = load_mode_targets(tfile)
    return RunConfig(
        scenario=scenario,
        master_seed=cfg["experiment"]["master_seed"],
        planner=planner,
        planner_cfg=build_planner_config(cfg, scenario),
        t_max=cfg["scenario"]["t_max"],
        comparison_mode=cfg["experiment"]["comparison_mode"],
        pinned_intent=cfg["human"]["pinned_intent"],
        observation_noise_std=cfg["human"]["observation_noise_std"],
        risk_threshold=cfg["human"]["risk_threshold"],
        targets=targets,
    )


def config_hash(cfg: dict) -> str:
    """SHA-256 over the semantically meaningful resolved fields."""
    reduced = {
        section: {
            key: value
            for key, value in body.items()
            if (section, key) not in _NON_SEMANTIC
        }
        for section, body in cfg.items()
    }
    canon = json.dumps(reduced, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Mode-target files


def load_mode_targets(path: str | Path) -> ModeTargetSet:
    """Read a mode-target file (schema documented in docs/mode_targets.md):

    intents:
      - name: aggressive
        modes:
          - label: holds speed
            observation: {mean: [9.5], cov: [[1.0]]}
            steering: {mean: [8.0, -14.0], cov: [[2.25, 0], [0, 16.0]]}
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"mode target file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"mode target parse error in {path}: {e}") from None
    if not isinstance(raw, dict) or "intents" not in raw:
        raise ConfigError("mode target file must contain an intents list")
    targets = []
    names = []
    for i, intent in enumerate(raw["intents"], start=1):
        names.append(str(intent.get("name", f"intent_{i}")))
        modes = intent.get("modes")
        if not modes:
            raise ConfigError(f"intent {names[-1]!r} has no modes")
        for k, mode in enumerate(modes, start=1):
            if "observation" not in mode:
                raise ConfigError(
                    f"mode {k} of intent {names[-1]!r} lacks an observation target"
                )
            obs = _gaussian_from(mode["observation"], f"{names[-1]}/mode {k} observation")
            steer = None
            if mode.get("steering") is not None:
                steer = _gaussian_from(mode["steering"], f"{names[-1]}/mode {k} steering")
            targets.append(
                ModeTarget(
                    intent_id=i, mode_id=k, target=obs,
                    label=str(mode.get("label", "")), steer=steer,
                )
            )
    try:
        return ModeTargetSet(targets, intent_names=names)
    except InvalidInputError as e:
        raise ConfigError(f"invalid mode target set: {e}") from None


def _gaussian_from(body: dict, where: str) -> Gaussian:
    try:
        return Gaussian(np.array(body["mean"], dtype=float),
                        np.array(body["cov"], dtype=float))
    except (KeyError, TypeError, ValueError, InvalidInputError) as e:
        raise ConfigError(f"bad Gaussian for {where}: {e}") from None
