"""Experiment configuration files (JSON, versioned, schema-checked)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .engine import Dimension, EngineConfig, SearchSpace
from .kernels import KERNEL_FAMILIES
from .warping import PRESET_NAMES, WarpingPrior, default_prior, prior_preset

CONFIG_VERSION = 1
SEED_ENV = "WARPBO_SEED"

_PRIOR = {
    "oneOf": [
        {"type": "string", "enum": list(PRESET_NAMES)},
        {
            "type": "object",
            "properties": {k: {"type": "number"} for k in ("mu_alpha", "sigma_alpha", "mu_beta", "sigma_beta")},
            "required": ["mu_alpha", "sigma_alpha", "mu_beta", "sigma_beta"],
            "additionalProperties": False,
        },
    ]
}

_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "space": {
            "type": "object",
            "properties": {
                "dims": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "properties": {
                            "name": {"type": "string", "minLength": 1},
                            "lower": {"type": "number"},
                            "upper": {"type": "number"},
                            "log": {"type": "boolean"},
                        },
                        "required": ["name", "lower", "upper"],
                        "additionalProperties": False,
                    },
                },
                "tasks": {"type": "array", "minItems": 1, "items": {"type": "string", "minLength": 1}},
            },
            "required": ["dims"],
            "additionalProperties": False,
        },
        "kernel": {"type": "string", "enum": list(KERNEL_FAMILIES)},
        "warping": {
            "type": "object",
            "properties": {
                "enabled": {"type": "boolean"},
                "prior": _PRIOR,
                "per_dim": {"type": "object", "additionalProperties": _PRIOR},
                "default_variance": {"type": "number", "exclusiveMinimum": 0},
                "variance_is_sigma": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "sampler": {
            "type": "object",
            "properties": {
                "burn_in_initial": {"type": "integer", "minimum": 0},
                "burn_in": {"type": "integer", "minimum": 0},
                "num_samples": _POS_INT,
                "thin": _POS_INT,
                "max_stepout": _POS_INT,
                "initial_width": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "acquisition": {
            "type": "object",
            "properties": {"budget": _POS_INT},
            "additionalProperties": False,
        },
        "init_count": _POS_INT,
        "seed": {"type": "integer"},
        "objective": {
            "type": "object",
            "properties": {
                "command": {
                    "oneOf": [
                        {"type": "string", "minLength": 1},
                        {"type": "array", "minItems": 1, "items": {"type": "string"}},
                    ]
                },
                "timeout": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["command"],
            "additionalProperties": False,
        },
    },
    "required": ["version", "space"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    space: SearchSpace
    engine: EngineConfig
    seed: int = 0
    objective_command: tuple[str, ...] | str | None = None
    objective_timeout: float | None = None


def _resolve_prior(entry, default: WarpingPrior) -> WarpingPrior:
    if entry is None:
        return default
    if isinstance(entry, str):
        return default if entry == "default" else prior_preset(entry)
    return WarpingPrior(**entry)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    try:
        space_d = data["space"]
        space = SearchSpace(
            tuple(Dimension(d["name"], d["lower"], d["upper"], d.get("log", False)) for d in space_d["dims"]),
            tuple(space_d.get("tasks", ["main"])),
        )
        w = data.get("warping", {})
        base_default = default_prior(w.get("default_variance", 0.75), not w.get("variance_is_sigma", False))
        top = _resolve_prior(w.get("prior"), base_default)
        per_dim = w.get("per_dim", {})
        unknown = set(per_dim) - set(space.names)
        if unknown:
            raise ConfigError(f"warping.per_dim names unknown dimensions: {sorted(unknown)}")
        priors = tuple(_resolve_prior(per_dim.get(n), top) for n in space.names)
        if all(p == default_prior() for p in priors):
            priors = None
        s = data.get("sampler", {})
        engine = EngineConfig(
            kernel=data.get("kernel", "matern52"),
            warping=w.get("enabled", True),
            warping_priors=priors,
            init_count=data.get("init_count", 2),
            acq_budget=data.get("acquisition", {}).get("budget"),
            **s,
        )
        obj = data.get("objective")
        cmd = None
        if obj is not None:
            cmd = obj["command"] if isinstance(obj["command"], str) else tuple(obj["command"])
        return ExperimentConfig(space, engine, int(data.get("seed", 0)), cmd,
                                None if obj is None else obj.get("timeout"))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"config error: {exc}") from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(data)


def resolve_seed(config_seed: int, cli_seed: int | None) -> int:
    """CLI flag beats the environment variable, which beats the config file."""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return int(config_seed)
