"""Gaussian policy and value heads over the point-cloud encoder.

One flat ParamStore holds everything: encoder parameters under ``enc``,
the mean head under ``mean``, the value head under ``value``, and a
state-independent per-dimension ``log_std`` row.  Keeping the whole
policy in a single vector is what makes checkpoints, finite-difference
checks, and Adam updates uniform across trainers.

The sampling recipe is normative for determinism: one call draws exactly
``action_dim`` standard normals from the supplied generator and forms
``raw = mean + exp(log_std) * z``.  The executed action is ``raw``
clamped to the [-1, 1] box; the recorded log-probability is the Gaussian
density of the raw, pre-clamp sample.  Evaluation uses the clamped mean
with no generator draws at all, so evaluation never perturbs a training
stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .envs import EnvConfig, make_env, proprio_width
from .errors import ConfigError, ShapeMismatchError
from .pointnet import (
    EncoderSpec,
    PointCloudObs,
    build_encoder_spec,
    encode,
    init_encoder_params,
)
from .rng import panel_seeds

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
# the last mean-head layer starts near zero so the initial policy is a
# centered Gaussian; without this, early policy-gradient updates chase the
# random initial features and waste a large share of the step budget
FINAL_MEAN_SCALE = 0.01
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PolicySpec:
    """Network shapes for one policy: encoder plus mean/value heads."""

    encoder: EncoderSpec
    mean: nn.NetSpec
    value: nn.NetSpec
    action_dim: int

    def __post_init__(self):
        if self.mean.in_width != self.encoder.out_width:
            raise ShapeMismatchError("mean head input must match encoder output width")
        if self.value.in_width != self.encoder.out_width:
            raise ShapeMismatchError("value head input must match encoder output width")
        if self.mean.out_width != self.action_dim:
            raise ShapeMismatchError("mean head output must match the action dimension")
        if self.value.out_width != 1:
            raise ShapeMismatchError("value head must emit a single scalar")


def build_policy_spec(
    task: str,
    action_dim: int = 2,
    head_widths: tuple[int, ...] = (64,),
    per_point_widths: tuple[int, ...] = (32, 64),
    post_widths: tuple[int, ...] = (64,),
) -> PolicySpec:
    """Policy shapes for one task (proprio width is task-specific)."""
    encoder = build_encoder_spec(
        proprio_width=proprio_width(task),
        per_point_widths=per_point_widths,
        post_widths=post_widths,
    )
    width = encoder.out_width
    # tanh heads keep the loss surface smooth where the optimizer lives;
    # the encoder below them stays relu
    mean = nn.mlp((width, *head_widths, action_dim), hidden="tanh", output="identity")
    value = nn.mlp((width, *head_widths, 1), hidden="tanh", output="identity")
    return PolicySpec(encoder, mean, value, action_dim)


def init_policy(
    store: nn.ParamStore,
    spec: PolicySpec,
    gen: np.random.Generator,
    log_std0: float = -0.5,
) -> None:
    """Register all policy parameters (registration order is the contract)."""
    if not np.isfinite(log_std0):
        raise ConfigError("initial log-std must be finite")
    init_encoder_params(store, spec.encoder, gen, "enc")
    nn.init_net_params(store, spec.mean, gen, "mean")
    nn.init_net_params(store, spec.value, gen, "value")
    last_mean_weight = [n for n in store.names() if n.startswith("mean.W")][-1]
    store.get(last_mean_weight)[:] *= FINAL_MEAN_SCALE
    store.add("log_std", np.full((1, spec.action_dim), float(log_std0)))


def log_std_of(store: nn.ParamStore, spec: PolicySpec) -> np.ndarray:
    """The log-std row, clamped to the supported range."""
    return np.clip(store.get("log_std")[0], LOG_STD_MIN, LOG_STD_MAX)


def log_std_grad_mask(store: nn.ParamStore, spec: PolicySpec) -> np.ndarray:
    """1 where the stored log-std is inside the clamp range, else 0."""
    raw = store.get("log_std")[0]
    return ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)


def gaussian_logp(x: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density; batched over leading axes of x/mean."""
    z = (x - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z + 2.0 * log_std + _LOG_2PI, axis=-1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Closed form: sum over dimensions of log-std + half log(2 pi e)."""
    return float(np.sum(log_std + 0.5 * (_LOG_2PI + 1.0)))


@dataclass
class ActionSample:
    """One policy draw: the executed action plus its bookkeeping."""

    action: np.ndarray  # raw clamped to the [-1, 1] box; what the env runs
    raw: np.ndarray  # pre-clamp Gaussian sample; what the density refers to
    logp: float
    value: float


def _heads(store: nn.ParamStore, spec: PolicySpec, obs: PointCloudObs) -> tuple[np.ndarray, float]:
    feat = encode(store, spec.encoder, obs)
    mean = nn.forward(store, spec.mean, feat, "mean")
    value = nn.forward(store, spec.value, feat, "value")
    return mean, float(value[0])


def sample_action(
    store: nn.ParamStore,
    spec: PolicySpec,
    obs: PointCloudObs,
    gen: np.random.Generator,
) -> ActionSample:
    """Draw one action; consumes exactly action_dim normals from gen."""
    mean, value = _heads(store, spec, obs)
    log_std = log_std_of(store, spec)
    z = gen.standard_normal(spec.action_dim)
    raw = mean + np.exp(log_std) * z
    logp = float(gaussian_logp(raw, mean, log_std))
    return ActionSample(np.clip(raw, -1.0, 1.0), raw, logp, value)


def mean_action(store: nn.ParamStore, spec: PolicySpec, obs: PointCloudObs) -> np.ndarray:
    """Deterministic policy: the clamped mean, no generator involved."""
    mean, _ = _heads(store, spec, obs)
    return np.clip(mean, -1.0, 1.0)


def value_of(store: nn.ParamStore, spec: PolicySpec, obs: PointCloudObs) -> float:
    _, value = _heads(store, spec, obs)
    return value


def rollout_success(store: nn.ParamStore, spec: PolicySpec, env, episode_seed: int) -> bool:
    """Run one episode under the deterministic policy; did it succeed?"""
    obs = env.reset(episode_seed)
    while True:
        res = env.step(mean_action(store, spec, obs))
        if res.done:
            return bool(res.success)
        obs = res.obs


def evaluate_policy(
    store: nn.ParamStore,
    spec: PolicySpec,
    env_cfg: EnvConfig,
    episodes: int,
    run_seed: int,
) -> float:
    """Success rate over a fixed seed panel for one split."""
    if episodes < 1:
        raise ConfigError("evaluation needs at least one episode")
    env = make_env(env_cfg)
    seeds = panel_seeds(run_seed, env_cfg.split, episodes)
    wins = sum(rollout_success(store, spec, env, s) for s in seeds)
    return wins / episodes
