"""On-policy PPO: rollouts, GAE, clipped-surrogate updates, training loop.

Determinism contract: one training run owns a single Philox stream that
serves episode seeds, action noise, and minibatch shuffles, in that
interleaved order; checkpoints capture its state words, so a resumed run
replays the exact draw sequence of an uninterrupted one.  Rollouts begin
with a fresh episode at the rollout boundary, which keeps environment
state out of checkpoints entirely.

Ratio bookkeeping: the buffer's collection-time log-probabilities are a
record of the behavior policy (and what the density oracle checks), but
the update recomputes old log-probabilities through the same batched
code path it uses for new ones before the first epoch.  Identical inputs
through identical kernels give bit-identical numbers, so the first
epoch's ratios are exactly one; mixing the single-observation collection
path into the ratio would instead compare two floating-point paths and
leak their last-ulp disagreements into the surrogate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import nn, pointnet, policy as pol
from .envs import EnvConfig, make_env
from .errors import ConfigError, NonFiniteError, ResumeError
from .persistence import Checkpoint, MetricsRecord, append_metrics, save_checkpoint
from .rng import generator_from_words, make_generator, state_words


@dataclass(frozen=True)
class PPOConfig:
    """Desk-scale defaults; Table-style full-scale values are accepted too."""

    samples_per_step: int = 2048  # S: transitions collected per iteration
    minibatch_size: int = 64  # B: the quantity stage two scales by alpha
    epochs: int = 4
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    total_steps: int = 200_000
    eval_period: int = 10_000
    eval_episodes: int = 20
    normalize_advantages: bool = True
    log_std0: float = -0.5

    def __post_init__(self):
        if not 1 <= self.minibatch_size <= self.samples_per_step:
            raise ConfigError("need 1 <= minibatch size <= samples per step")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("discount must lie in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("GAE lambda must lie in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ConfigError("clip epsilon must be positive")
        if self.epochs < 1 or self.eval_period < 1 or self.eval_episodes < 1:
            raise ConfigError("epochs, eval period, and eval episodes must be >= 1")
        if self.learning_rate <= 0.0 or self.total_steps < 0:
            raise ConfigError("need a positive learning rate and non-negative budget")
        if self.value_coef < 0.0 or self.entropy_coef < 0.0:
            raise ConfigError("loss coefficients cannot be negative")


@dataclass
class RolloutBuffer:
    """S transitions; advantages/returns stay None until compute_gae."""

    points: np.ndarray  # (S, N, C) observation clouds
    proprios: np.ndarray  # (S, P)
    actions: np.ndarray  # (S, A) clamped, as executed (replayable)
    raw_actions: np.ndarray  # (S, A) pre-clamp samples the densities refer to
    logps: np.ndarray  # (S,) collection-time log-probabilities (record)
    rewards: np.ndarray  # (S,)
    values: np.ndarray  # (S,)
    dones: np.ndarray  # (S,) float 0/1
    bootstrap_value: float  # V of the state after the last transition, 0 if done
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.rewards.shape[0]


def _episode_seed(gen: np.random.Generator) -> int:
    return int(gen.integers(0, 2**63))


def collect_rollout(
    store: nn.ParamStore,
    spec: pol.PolicySpec,
    env,
    samples: int,
    gen: np.random.Generator,
) -> RolloutBuffer:
    """Gather exactly `samples` transitions, auto-resetting on done."""
    if samples < 1:
        raise ConfigError("rollout needs at least one sample")
    obs = env.reset(_episode_seed(gen))
    N, C = obs.points.shape
    P = obs.proprio.shape[0]
    A = spec.action_dim
    points = np.empty((samples, N, C))
    proprios = np.empty((samples, P))
    actions = np.empty((samples, A))
    raws = np.empty((samples, A))
    logps = np.empty(samples)
    rewards = np.empty(samples)
    values = np.empty(samples)
    dones = np.zeros(samples)
    for t in range(samples):
        s = pol.sample_action(store, spec, obs, gen)
        res = env.step(s.action)
        points[t] = obs.points
        proprios[t] = obs.proprio
        actions[t] = s.action
        raws[t] = s.raw
        logps[t] = s.logp
        rewards[t] = res.reward
        values[t] = s.value
        dones[t] = 1.0 if res.done else 0.0
        if res.done:
            obs = env.reset(_episode_seed(gen)) if t + 1 < samples else res.obs
        else:
            obs = res.obs
    bootstrap = 0.0 if dones[-1] else pol.value_of(store, spec, obs)
    return RolloutBuffer(points, proprios, actions, raws, logps, rewards, values, dones, bootstrap)


def compute_gae(
    buffer: RolloutBuffer, gamma: float, lam: float, normalize: bool = True
) -> RolloutBuffer:
    """Right-to-left GAE; returns use raw advantages, normalization after."""
    S = buffer.size
    adv = np.zeros(S)
    carry = 0.0
    for t in range(S - 1, -1, -1):
        next_value = buffer.values[t + 1] if t + 1 < S else buffer.bootstrap_value
        mask = 1.0 - buffer.dones[t]
        delta = buffer.rewards[t] + gamma * next_value * mask - buffer.values[t]
        carry = delta + gamma * lam * mask * carry
        adv[t] = carry
    buffer.returns = adv + buffer.values
    if normalize and S >= 2:
        centered = adv - adv.mean()
        std = centered.std()
        adv = centered / std if std > 0.0 else centered
    buffer.advantages = adv
    return buffer


@dataclass
class UpdateStats:
    """Minibatch-averaged diagnostics from one ppo_update call."""

    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    minibatches: int


def _policy_batch_trace(store, spec, points, proprios):
    enc_out, enc_cache = pointnet.encode_batch_trace(store, spec.encoder, points, proprios)
    mean, mean_cache = nn.forward_batch_trace(store, spec.mean, enc_out, "mean")
    value, value_cache = nn.forward_batch_trace(store, spec.value, enc_out, "value")
    return enc_out, mean, value[:, 0], (enc_cache, mean_cache, value_cache)


def batched_logps(
    store: nn.ParamStore, spec: pol.PolicySpec, buffer: RolloutBuffer
) -> np.ndarray:
    """Log-densities of the buffer's raw actions, via the batched path."""
    enc_out = pointnet.encode_batch(store, spec.encoder, buffer.points, buffer.proprios)
    mean = nn.forward_batch(store, spec.mean, enc_out, "mean")
    log_std = pol.log_std_of(store, spec)
    return pol.gaussian_logp(buffer.raw_actions, mean, log_std)


def surrogate_loss_and_grad(
    store: nn.ParamStore,
    spec: pol.PolicySpec,
    buffer: RolloutBuffer,
    idx: np.ndarray,
    old_logps: np.ndarray,
    cfg: PPOConfig,
) -> tuple[float, np.ndarray, dict]:
    """Full PPO minibatch objective with analytic gradients.

    Tie-breaking in min(ratio * A, clipped * A) resolves to the clipped
    branch, whose derivative vanishes outside the trust region; with
    clip_eps -> 0 this makes the surrogate gradient exactly zero, the
    degenerate limit the objective is supposed to have.
    """
    pts = buffer.points[idx]
    prp = buffer.proprios[idx]
    raw = buffer.raw_actions[idx]
    adv = buffer.advantages[idx]
    ret = buffer.returns[idx]
    old = old_logps[idx]
    m = len(idx)

    enc_out, mean, value, caches = _policy_batch_trace(store, spec, pts, prp)
    enc_cache, mean_cache, value_cache = caches
    log_std = pol.log_std_of(store, spec)
    sigma = np.exp(log_std)
    z = (raw - mean) / sigma
    logp = -0.5 * np.sum(z * z + 2.0 * log_std + np.log(2.0 * np.pi), axis=1)

    ratio = np.exp(logp - old)
    lo, hi = 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps
    clipped = np.clip(ratio, lo, hi)
    surr = np.minimum(ratio * adv, clipped * adv)
    policy_loss = -float(np.mean(surr))
    value_loss = float(np.mean((value - ret) ** 2))
    entropy = pol.gaussian_entropy(log_std)
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(total):
        # bail before the backward pass floods the gradient with nans
        raise NonFiniteError("non-finite minibatch loss")

    # gradient of -mean(surr) through the active branch of the min
    unclipped_active = ratio * adv < clipped * adv  # strict: ties go clipped
    inside = (ratio > lo) & (ratio < hi)
    branch = np.where(unclipped_active, 1.0, inside.astype(np.float64))
    d_logp = -(adv * branch * ratio) / m  # d(total)/d(logp_i)

    d_mean = d_logp[:, None] * z / sigma[None, :]
    d_value = (2.0 * cfg.value_coef / m) * (value - ret)

    grad = store.zeros_grad()
    d_enc = nn.backward_batch(store, spec.mean, mean_cache, d_mean, grad, "mean")
    d_enc += nn.backward_batch(store, spec.value, value_cache, d_value[:, None], grad, "value")
    pointnet.encode_batch_backward(store, spec.encoder, enc_cache, d_enc, grad)
    lo_ls, hi_ls = store.slice_bounds("log_std")
    mask = pol.log_std_grad_mask(store, spec)
    d_log_std = np.sum(d_logp[:, None] * (z * z - 1.0), axis=0) - cfg.entropy_coef
    grad[lo_ls:hi_ls] += d_log_std * mask

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }
    return total, grad, stats


def ppo_update(
    store: nn.ParamStore,
    spec: pol.PolicySpec,
    buffer: RolloutBuffer,
    cfg: PPOConfig,
    gen: np.random.Generator,
    adam: nn.AdamState,
) -> UpdateStats:
    """E epochs of shuffled minibatches, one Adam step per minibatch."""
    if buffer.advantages is None or buffer.returns is None:
        raise ConfigError("run compute_gae before ppo_update")
    old_logps = batched_logps(store, spec, buffer)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0, "clip_fraction": 0.0}
    count = 0
    for epoch in range(cfg.epochs):
        perm = gen.permutation(buffer.size)
        for start in range(0, buffer.size, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]  # last short batch kept
            try:
                total, grad, stats = surrogate_loss_and_grad(store, spec, buffer, idx, old_logps, cfg)
            except NonFiniteError as err:
                raise NonFiniteError(
                    f"{err} in epoch {epoch}, minibatch {start // cfg.minibatch_size}"
                ) from None
            nn.adam_step(store, grad, adam)
            for key in sums:
                sums[key] += stats[key]
            count += 1
    return UpdateStats(
        policy_loss=sums["policy_loss"] / count,
        value_loss=sums["value_loss"] / count,
        entropy=sums["entropy"] / count,
        approx_kl=sums["approx_kl"] / count,
        clip_fraction=sums["clip_fraction"] / count,
        minibatches=count,
    )


def train_ppo(
    cfg: PPOConfig,
    env_cfg: EnvConfig,
    seed: int,
    out_dir: str,
    resume: Checkpoint | None = None,
    stage: int = 1,
    reset_optimizer: bool = False,
    run_id: str | None = None,
) -> list[MetricsRecord]:
    """The full loop; returns the metric history this call produced.

    `cfg.total_steps` is the budget for this call: a resumed run trains
    for that many further environment steps on top of the checkpoint's
    step counter.  Evaluation runs at entry, every eval_period collected
    steps, and once more at the end if steps advanced since the last one;
    each evaluation appends a metrics record and writes a checkpoint.
    """
    os.makedirs(out_dir, exist_ok=True)
    if run_id is None:
        run_id = f"{env_cfg.task}-ppo-seed{seed}"
    spec = pol.build_policy_spec(env_cfg.task)
    train_cfg = replace(env_cfg, split="train")
    test_cfg = replace(env_cfg, split="test")

    if resume is not None:
        if resume.trainer_kind != "ppo":
            raise ResumeError(f"checkpoint holds a {resume.trainer_kind} run, not ppo")
        if resume.env_fingerprint != env_cfg.fingerprint():
            raise ResumeError("checkpoint was trained on a different environment")
        store = resume.param_store()
        adam = nn.init_adam(store.size, lr=cfg.learning_rate) if reset_optimizer else resume.adam.copy()
        gen = generator_from_words(resume.rng_words)
        start_step = resume.step
    else:
        store = nn.ParamStore()
        pol.init_policy(store, spec, make_generator(seed, "ppo", "init", env_cfg.task), cfg.log_std0)
        adam = nn.init_adam(store.size, lr=cfg.learning_rate)
        gen = make_generator(seed, "ppo", "train", env_cfg.task)
        start_step = 0

    env = make_env(train_cfg)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    history: list[MetricsRecord] = []

    def evaluate(step: int) -> None:
        train_rate = pol.evaluate_policy(store, spec, train_cfg, cfg.eval_episodes, seed)
        test_rate = pol.evaluate_policy(store, spec, test_cfg, cfg.eval_episodes, seed)
        record = MetricsRecord(step, train_rate, test_rate, stage)
        append_metrics(metrics_path, record)
        history.append(record)
        save_checkpoint(
            os.path.join(out_dir, f"ckpt-{step:08d}.ckpt"),
            Checkpoint(
                run_id=run_id,
                step=step,
                trainer_kind="ppo",
                env_fingerprint=env_cfg.fingerprint(),
                params=store.flat.copy(),
                slices=store.directory(),
                adam=adam.copy(),
                rng_seed=seed,
                rng_words=state_words(gen),
                train_success=train_rate,
                test_success=test_rate,
            ),
        )

    collected = 0
    last_eval = 0
    evaluate(start_step)
    S = cfg.samples_per_step
    while collected + S <= cfg.total_steps:
        buffer = collect_rollout(store, spec, env, S, gen)
        compute_gae(buffer, cfg.gamma, cfg.lam, cfg.normalize_advantages)
        ppo_update(store, spec, buffer, cfg, gen, adam)
        collected += S
        if collected - last_eval >= cfg.eval_period:
            evaluate(start_step + collected)
            last_eval = collected
    if collected > last_eval:
        evaluate(start_step + collected)
    return history
