"""Behavior cloning on pooled expert state-action pairs.

The sampler is positional: sample n of the run (counting from zero,
across the whole run, not per call) lives at position n mod M of the
permutation for epoch n div M, and each epoch's permutation is derived
from (seed, "bc", "perm", epoch) alone.  The stream position is
therefore a pure function of the step counter, so a resumed run reads
the exact samples an uninterrupted one would, without the checkpoint
having to carry sampler state.  Outer steps consume a fixed block of S
samples, which is what stage-two fine-tuning rescales, and a block may
straddle an epoch boundary (tail of one permutation, head of the next).

Only the mean head and the encoder receive gradients; the value head
and the log-std vector are along for the ride so that the policy a BC
checkpoint restores stays structurally identical to a PPO one.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from . import nn, pointnet, policy as pol
from .envs import DemoTrajectory, EnvConfig, make_env
from .errors import ConfigError, NonFiniteError, ResumeError
from .persistence import Checkpoint, MetricsRecord, append_metrics, save_checkpoint
from .rng import make_generator, state_words


@dataclass(frozen=True)
class BCConfig:
    """Outer steps are the budget unit; each consumes samples_per_step pairs."""

    batch_size: int = 64  # B: scaled by alpha in stage two
    samples_per_step: int = 256  # S: scaled by beta in stage two
    learning_rate: float = 1e-3
    total_steps: int = 2000
    eval_period: int = 100
    eval_episodes: int = 20
    log_std0: float = -0.5

    def __post_init__(self):
        if not 1 <= self.batch_size <= self.samples_per_step:
            raise ConfigError("need 1 <= batch size <= samples per step")
        if self.learning_rate <= 0.0 or self.total_steps < 0:
            raise ConfigError("need a positive learning rate and non-negative budget")
        if self.eval_period < 1 or self.eval_episodes < 1:
            raise ConfigError("eval period and eval episodes must be >= 1")


@dataclass(frozen=True)
class DemoDataset:
    """Expert pairs pooled across trajectories, order preserved."""

    points: np.ndarray  # (M, N, C)
    proprios: np.ndarray  # (M, P)
    actions: np.ndarray  # (M, A)
    fingerprint: str

    def __post_init__(self):
        M = self.actions.shape[0]
        if M < 1:
            raise ConfigError("a demo dataset needs at least one pair")
        if self.points.shape[0] != M or self.proprios.shape[0] != M:
            raise ConfigError("demo arrays disagree on pair count")

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @classmethod
    def from_trajectories(cls, demos: list[DemoTrajectory], fingerprint: str) -> "DemoDataset":
        if not demos:
            raise ConfigError("no trajectories to pool")
        return cls(
            points=np.concatenate([d.points for d in demos]),
            proprios=np.concatenate([d.proprios for d in demos]),
            actions=np.concatenate([d.actions for d in demos]),
            fingerprint=fingerprint,
        )


def stream_indices(seed: int, dataset_size: int, start: int, count: int) -> np.ndarray:
    """Dataset rows for stream positions [start, start + count)."""
    if dataset_size < 1:
        raise ConfigError("dataset size must be positive")
    if start < 0 or count < 0:
        raise ConfigError("stream positions cannot be negative")
    out = np.empty(count, dtype=np.int64)
    filled = 0
    n = start
    while filled < count:
        epoch, pos = divmod(n, dataset_size)
        take = min(dataset_size - pos, count - filled)
        perm = make_generator(seed, "bc", "perm", epoch).permutation(dataset_size)
        out[filled : filled + take] = perm[pos : pos + take]
        filled += take
        n += take
    return out


def bc_loss(
    store: nn.ParamStore,
    spec: pol.PolicySpec,
    points: np.ndarray,
    proprios: np.ndarray,
    actions: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean squared action error and its gradient (mean head and encoder only)."""
    m = actions.shape[0]
    enc_out, enc_cache = pointnet.encode_batch_trace(store, spec.encoder, points, proprios)
    mean, mean_cache = nn.forward_batch_trace(store, spec.mean, enc_out, "mean")
    err = mean - actions
    loss = float(np.mean(np.sum(err * err, axis=1)))
    grad = store.zeros_grad()
    d_enc = nn.backward_batch(store, spec.mean, mean_cache, (2.0 / m) * err, grad, "mean")
    pointnet.encode_batch_backward(store, spec.encoder, enc_cache, d_enc, grad)
    return loss, grad


def train_bc(
    cfg: BCConfig,
    dataset: DemoDataset,
    env_cfg: EnvConfig,
    seed: int,
    out_dir: str,
    resume: Checkpoint | None = None,
    stage: int = 1,
    reset_optimizer: bool = False,
    run_id: str | None = None,
) -> list[MetricsRecord]:
    """Clone the dataset's actions; returns this call's metric history.

    Mirrors train_ppo: cfg.total_steps outer steps on top of whatever the
    resume checkpoint had, evaluation at entry, every eval_period steps,
    and at the end, each with a metrics record and a checkpoint.  The
    stored rng words are a nominal stream: the sampler derives everything
    from (seed, step), so BC resume needs no generator state.
    """
    if dataset.fingerprint != env_cfg.fingerprint():
        raise ConfigError("demo dataset was recorded on a different environment")
    if cfg.samples_per_step > dataset.size:
        raise ConfigError(
            f"samples per step {cfg.samples_per_step} exceeds dataset size {dataset.size}"
        )
    os.makedirs(out_dir, exist_ok=True)
    if run_id is None:
        run_id = f"{env_cfg.task}-bc-seed{seed}"
    spec = pol.build_policy_spec(env_cfg.task)
    train_cfg = replace(env_cfg, split="train")
    test_cfg = replace(env_cfg, split="test")

    if resume is not None:
        if resume.trainer_kind != "bc":
            raise ResumeError(f"checkpoint holds a {resume.trainer_kind} run, not bc")
        if resume.env_fingerprint != env_cfg.fingerprint():
            raise ResumeError("checkpoint was trained on a different environment")
        store = resume.param_store()
        adam = nn.init_adam(store.size, lr=cfg.learning_rate) if reset_optimizer else resume.adam.copy()
        start_step = resume.step
    else:
        store = nn.ParamStore()
        pol.init_policy(store, spec, make_generator(seed, "bc", "init", env_cfg.task), cfg.log_std0)
        adam = nn.init_adam(store.size, lr=cfg.learning_rate)
        start_step = 0

    nominal_words = state_words(make_generator(seed, "bc", "nominal", env_cfg.task))
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
                trainer_kind="bc",
                env_fingerprint=env_cfg.fingerprint(),
                params=store.flat.copy(),
                slices=store.directory(),
                adam=adam.copy(),
                rng_seed=seed,
                rng_words=nominal_words,
                train_success=train_rate,
                test_success=test_rate,
            ),
        )

    done = 0
    last_eval = 0
    evaluate(start_step)
    S, B = cfg.samples_per_step, cfg.batch_size
    while done + 1 <= cfg.total_steps:
        block = stream_indices(seed, dataset.size, (start_step + done) * S, S)
        for lo in range(0, S, B):
            idx = block[lo : lo + B]  # last short minibatch kept
            loss, grad = bc_loss(
                store, spec, dataset.points[idx], dataset.proprios[idx], dataset.actions[idx]
            )
            if not np.isfinite(loss):
                raise NonFiniteError(
                    f"non-finite loss at outer step {start_step + done}, minibatch {lo // B}"
                )
            nn.adam_step(store, grad, adam)
        done += 1
        if done - last_eval >= cfg.eval_period:
            evaluate(start_step + done)
            last_eval = done
    if done > last_eval:
        evaluate(start_step + done)
    return history
