"""Sectioned key=value run configuration and the reproducibility manifest.

A run is described by an INI-style file with one section per module
([run], [ppo], [bc], [demos], [twostage], [grid], [eval], [export]).
Every key has a documented default, an absent file means all defaults,
and --set section.key=value overrides win over file values.  After
resolution the full picture, defaults included, is written to the run
directory as manifest.ini so the run is reproducible from its artifacts
alone.
"""

from __future__ import annotations

import configparser
import os
from typing import Any, Callable

from . import __version__
from .bc import BCConfig
from .envs import EnvConfig, make_config
from .errors import ConfigError
from .ppo import PPOConfig
from .twostage import GridSpec, ScalePair

_BOOL_STATES = configparser.ConfigParser.BOOLEAN_STATES


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL_STATES[raw.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {raw!r}") from None


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(part) for part in raw.replace(",", " ").split())


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(part) for part in raw.replace(",", " ").split())


def _optional_int(raw: str) -> int | None:
    raw = raw.strip()
    return int(raw) if raw else None


def _identity(raw: str) -> str:
    return raw.strip()


_ppo = PPOConfig()
_bc = BCConfig()
_grid = GridSpec()

# section -> key -> (default, parser); defaults mirror the dataclasses
SCHEMA: dict[str, dict[str, tuple[Any, Callable[[str], Any]]]] = {
    "run": {
        "task": ("reach2d", _identity),
        "split": ("train", _identity),
        "env_seed": (0, int),
        "horizon": (None, _optional_int),  # empty means the task default
        "n_points": (None, _optional_int),
    },
    "ppo": {
        "samples_per_step": (_ppo.samples_per_step, int),
        "minibatch_size": (_ppo.minibatch_size, int),
        "epochs": (_ppo.epochs, int),
        "clip_eps": (_ppo.clip_eps, float),
        "gamma": (_ppo.gamma, float),
        "lam": (_ppo.lam, float),
        "value_coef": (_ppo.value_coef, float),
        "entropy_coef": (_ppo.entropy_coef, float),
        "learning_rate": (_ppo.learning_rate, float),
        "total_steps": (_ppo.total_steps, int),
        "eval_period": (_ppo.eval_period, int),
        "eval_episodes": (_ppo.eval_episodes, int),
        "normalize_advantages": (_ppo.normalize_advantages, _parse_bool),
        "log_std0": (_ppo.log_std0, float),
    },
    "bc": {
        "batch_size": (_bc.batch_size, int),
        "samples_per_step": (_bc.samples_per_step, int),
        "learning_rate": (_bc.learning_rate, float),
        "total_steps": (_bc.total_steps, int),
        "eval_period": (_bc.eval_period, int),
        "eval_episodes": (_bc.eval_episodes, int),
        "log_std0": (_bc.log_std0, float),
        "demos": ("", _identity),  # path to a demo bundle, required by train-bc
    },
    "demos": {
        "count": (100, int),
        "keep_only_success": (True, _parse_bool),
        "out": ("demos.bin", _identity),  # written under the run directory
    },
    "twostage": {
        "trainer": ("ppo", _identity),
        "alpha": (0.9, float),
        "beta": (0.875, float),
        "stage1_steps": (_grid.stage1_steps, int),
        "stage2_steps": (_grid.stage2_steps, int),
        "reset_optimizer": (False, _parse_bool),
    },
    "grid": {
        "trainer": ("ppo", _identity),
        "alphas": (_grid.alphas, _parse_floats),
        "betas": (_grid.betas, _parse_floats),
        "base_batch": (_grid.base_batch, int),
        "base_samples": (_grid.base_samples, int),
        "seeds": ((), _parse_ints),  # empty means: the --seed flag alone
        "stage1_steps": (_grid.stage1_steps, int),
        "stage2_steps": (_grid.stage2_steps, int),
    },
    "eval": {
        "checkpoint": ("", _identity),
        "episodes": (100, int),
        "split": ("test", _identity),
    },
    "export": {
        "metrics": ("", _identity),  # input metrics log
        "out": ("trendline.csv", _identity),  # written under the run directory
    },
}


def resolve_config(path: str | None, overrides: list[str] | None = None) -> dict:
    """Layer defaults <- file <- overrides into a fully typed config dict."""
    resolved = {section: {key: spec[0] for key, spec in keys.items()} for section, keys in SCHEMA.items()}

    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"no config file at {path}")
        parser = configparser.ConfigParser(strict=True, interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            if section == "meta":
                continue  # manifests carry a [meta] block; feeding one back as --config is fine
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown config section [{section}]")
            for key, raw in parser.items(section):
                _apply(resolved, section, key, raw, origin=path)

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        section, key = dotted.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"override names unknown section [{section}]")
        _apply(resolved, section.strip(), key.strip(), raw, origin="--set")

    return resolved


def _apply(resolved: dict, section: str, key: str, raw: str, origin: str) -> None:
    try:
        _, parse = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"{origin}: unknown config key {section}.{key}") from None
    try:
        resolved[section][key] = parse(raw)
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{origin}: bad value for {section}.{key}: {exc}") from None


def env_config(resolved: dict) -> EnvConfig:
    run = resolved["run"]
    overrides = {}
    if run["horizon"] is not None:
        overrides["horizon"] = run["horizon"]
    if run["n_points"] is not None:
        overrides["n_points"] = run["n_points"]
    return make_config(run["task"], split=run["split"], seed=run["env_seed"], **overrides)


def ppo_config(resolved: dict, **replacements) -> PPOConfig:
    return PPOConfig(**{**resolved["ppo"], **replacements})


def bc_config(resolved: dict, **replacements) -> BCConfig:
    fields = {k: v for k, v in resolved["bc"].items() if k != "demos"}
    return BCConfig(**{**fields, **replacements})


def grid_spec(resolved: dict, fallback_seed: int) -> GridSpec:
    grid = resolved["grid"]
    seeds = grid["seeds"] or (fallback_seed,)
    return GridSpec(
        alphas=tuple(grid["alphas"]),
        betas=tuple(grid["betas"]),
        base_batch=grid["base_batch"],
        base_samples=grid["base_samples"],
        seeds=tuple(seeds),
        stage1_steps=grid["stage1_steps"],
        stage2_steps=grid["stage2_steps"],
    )


def scale_pair(resolved: dict) -> ScalePair:
    return ScalePair(resolved["twostage"]["alpha"], resolved["twostage"]["beta"])


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value)


def write_manifest(out_dir: str, command: str, seed: int, resolved: dict) -> str:
    """Dump the fully resolved config (defaults materialized) plus run
    identity to out_dir/manifest.ini; returns the manifest path."""
    env = env_config(resolved)
    writer = configparser.ConfigParser(interpolation=None)
    writer["meta"] = {"command": command, "seed": str(seed), "version": __version__}
    for section, keys in resolved.items():
        body = dict(keys)
        if section == "run":
            body["horizon"] = env.horizon  # materialize task defaults
            body["n_points"] = env.n_points
        writer[section] = {k: _format_value(v) for k, v in body.items()}
    path = os.path.join(out_dir, "manifest.ini")
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        writer.write(fh)
    return path
