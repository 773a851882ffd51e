"""Two-stage fine-tuning: best-checkpoint tracking, hyperparameter
rescaling, stage-two resumption, and the grid-search harness.

The procedure: train normally, watch the test-split success rate, and
when it stalls (or the stage-one budget runs out) resume from the
checkpoint with the highest test rate seen so far, with the minibatch
size scaled by alpha and the samples consumed per outer step scaled by
beta.  The grid harness sweeps (alpha, beta) cells that all branch from
one shared stage-one run per seed, plus a no-restart baseline row that
simply keeps training from the last checkpoint at the original sizes.

Everything here is trainer-agnostic: a Trainer adapter carries the base
config and knows which field is the batch size, so PPO (minibatch_size /
samples_per_step) and BC (batch_size / samples_per_step) plug in the
same way.
"""

from __future__ import annotations

import dataclasses
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bc as bc_mod, ppo as ppo_mod
from .envs import EnvConfig
from .errors import ConfigError, DeskRLError
from .persistence import MetricsRecord, export_table, load_checkpoint

STALL_LIMIT = 3  # consecutive evaluations without a new best test rate


@dataclass(frozen=True)
class ScalePair:
    """Stage-two multipliers: alpha on batch size, beta on samples per step."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError(f"beta must lie in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class BestTracker:
    """Highest test rate over a history, earliest step on ties."""

    test_success: float
    step: int
    checkpoint: str  # filename of the checkpoint written at that step


def _as_step_rates(entry) -> tuple[int, float, float]:
    if isinstance(entry, MetricsRecord):
        return entry.step, entry.train_success, entry.test_success
    step, train, test = entry
    return int(step), float(train), float(test)


def track_best(history) -> BestTracker:
    """Argmax of the test rate over (step, train, test)-shaped entries."""
    entries = [_as_step_rates(e) for e in history]
    if not entries:
        raise ConfigError("cannot track the best of an empty history")
    best_step, _, best_test = entries[0]
    for step, _, test in entries[1:]:
        if test > best_test:  # strict: ties keep the earliest step
            best_step, best_test = step, test
    return BestTracker(best_test, best_step, f"ckpt-{best_step:08d}.ckpt")


def scale_hyperparams(batch0: int, samples0: int, scales: ScalePair) -> tuple[int, int]:
    """(B1, S1) = (round(alpha * B0), round(beta * S0)), half-up, floor 1, B1 <= S1."""
    if batch0 < 1 or samples0 < 1:
        raise ConfigError("base batch and samples must be at least 1")
    batch1 = max(1, math.floor(scales.alpha * batch0 + 0.5))
    samples1 = max(1, math.floor(scales.beta * samples0 + 0.5))
    return min(batch1, samples1), samples1


@dataclass(frozen=True)
class Trainer:
    """Binds a run function to its base config and batch-field name."""

    kind: str  # "ppo" | "bc"
    base_cfg: object
    batch_field: str
    run: Callable  # (cfg, seed, out_dir, resume, stage) -> list[MetricsRecord]

    @property
    def base_batch(self) -> int:
        return getattr(self.base_cfg, self.batch_field)

    @property
    def base_samples(self) -> int:
        return self.base_cfg.samples_per_step

    @property
    def eval_period(self) -> int:
        return self.base_cfg.eval_period

    def sized_cfg(self, batch: int, samples: int, total_steps: int):
        return dataclasses.replace(
            self.base_cfg,
            **{self.batch_field: batch, "samples_per_step": samples, "total_steps": total_steps},
        )


def ppo_trainer(cfg: ppo_mod.PPOConfig, env_cfg: EnvConfig) -> Trainer:
    def run(run_cfg, seed, out_dir, resume=None, stage=1, reset_optimizer=False):
        return ppo_mod.train_ppo(
            run_cfg, env_cfg, seed, out_dir, resume=resume, stage=stage, reset_optimizer=reset_optimizer
        )

    return Trainer("ppo", cfg, "minibatch_size", run)


def bc_trainer(cfg: bc_mod.BCConfig, dataset: bc_mod.DemoDataset, env_cfg: EnvConfig) -> Trainer:
    def run(run_cfg, seed, out_dir, resume=None, stage=1, reset_optimizer=False):
        return bc_mod.train_bc(
            run_cfg, dataset, env_cfg, seed, out_dir,
            resume=resume, stage=stage, reset_optimizer=reset_optimizer,
        )

    return Trainer("bc", cfg, "batch_size", run)


@dataclass(frozen=True)
class RunRecord:
    """One results-table row; nan rates mark a cell that failed mid-run."""

    row: int
    alpha: float
    beta: float
    batch: int
    samples: int
    train_success: float
    test_success: float
    seed: int
    stage2_steps: int

    def __post_init__(self):
        for rate in (self.train_success, self.test_success):
            if not (math.isnan(rate) or 0.0 <= rate <= 1.0):
                raise ConfigError(f"success rates must lie in [0, 1], got {rate}")

    def as_row(self):
        return (
            self.row, self.alpha, self.beta, self.batch, self.samples,
            self.train_success, self.test_success, self.seed, self.stage2_steps,
        )


def run_stage_one(trainer: Trainer, budget: int, seed: int, out_dir: str) -> list[MetricsRecord]:
    """Train at base sizes until the test rate stalls or the budget is spent.

    Runs in eval_period chunks through the trainer's own resume path, so
    early stopping costs nothing in determinism: the realized history is
    bit-identical to a prefix of the single uninterrupted run.  Returns
    the deduplicated history (resumed chunks re-evaluate their restore
    point; those repeats are dropped).
    """
    if budget < trainer.eval_period:
        raise ConfigError("stage-one budget is below one evaluation period")
    history: list[MetricsRecord] = []
    best = -1.0
    stall = 0
    spent = 0
    resume = None
    while spent < budget and stall < STALL_LIMIT:
        chunk = min(trainer.eval_period, budget - spent)
        cfg = trainer.sized_cfg(trainer.base_batch, trainer.base_samples, chunk)
        part = trainer.run(cfg, seed, out_dir, resume=resume, stage=1)
        fresh = part if resume is None else part[1:]
        advanced = fresh[-1].step - spent if fresh else 0
        if advanced <= 0:
            break  # budget slice too small to fit one more training step
        history.extend(fresh)
        spent = fresh[-1].step
        for record in fresh:
            if record.test_success > best:
                best = record.test_success
                stall = 0
            else:
                stall += 1
        resume = load_checkpoint(os.path.join(out_dir, f"ckpt-{spent:08d}.ckpt"))
    return history


def _best_leg_record(leg: list[MetricsRecord]) -> MetricsRecord:
    best = track_best(leg)
    for record in leg:
        if record.step == best.step and record.test_success == best.test_success:
            return record
    raise ConfigError("best step missing from its own history")  # unreachable


def run_two_stage(
    trainer: Trainer,
    scales: ScalePair,
    stage1_steps: int,
    stage2_steps: int,
    seed: int,
    out_dir: str,
    reset_optimizer: bool = False,
    row: int = 1,
) -> tuple[list[MetricsRecord], RunRecord]:
    """Stage one at base sizes, then resume the best checkpoint rescaled.

    Returns the concatenated history (stage markers 1 then 2) and a
    RunRecord carrying the best rates the stage-two leg reached.  With
    stage2_steps = 0 the record simply reports the stage-one best.
    """
    if stage2_steps < 0:
        raise ConfigError("stage-two budget cannot be negative")
    stage1_dir = os.path.join(out_dir, "stage1")
    stage1 = run_stage_one(trainer, stage1_steps, seed, stage1_dir)
    best = track_best(stage1)
    batch1, samples1 = scale_hyperparams(trainer.base_batch, trainer.base_samples, scales)

    if stage2_steps == 0:
        peak = _best_leg_record(stage1)
        record = RunRecord(
            row, scales.alpha, scales.beta, batch1, samples1,
            peak.train_success, peak.test_success, seed, 0,
        )
        return stage1, record

    restore = load_checkpoint(os.path.join(stage1_dir, best.checkpoint))
    cfg2 = trainer.sized_cfg(batch1, samples1, stage2_steps)
    stage2 = trainer.run(
        cfg2, seed, os.path.join(out_dir, "stage2"),
        resume=restore, stage=2, reset_optimizer=reset_optimizer,
    )
    peak = _best_leg_record(stage2)
    record = RunRecord(
        row, scales.alpha, scales.beta, batch1, samples1,
        peak.train_success, peak.test_success, seed, stage2_steps,
    )
    return stage1 + stage2, record


@dataclass(frozen=True)
class GridSpec:
    """The Table-style sweep: scale lists, base sizes, seeds, stage budgets."""

    alphas: tuple[float, ...] = (0.9, 0.8, 0.7)
    betas: tuple[float, ...] = (1.0, 0.875, 0.75)
    base_batch: int = 64
    base_samples: int = 2048
    seeds: tuple[int, ...] = (0,)
    stage1_steps: int = 40_960
    stage2_steps: int = 20_480

    def __post_init__(self):
        if not self.alphas or not self.betas or not self.seeds:
            raise ConfigError("alpha, beta, and seed lists must be non-empty")
        if self.base_batch < 1 or self.base_samples < 1:
            raise ConfigError("base batch and samples must be at least 1")
        if self.stage1_steps < 1 or self.stage2_steps < 0:
            raise ConfigError("stage budgets must be positive (stage two may be 0)")

    def cells(self) -> list[tuple[float, float]]:
        """Rows 2..: beta-major, alphas in list order (descending in the table)."""
        return [(a, b) for b in self.betas for a in self.alphas]


def _failure_record(row, alpha, beta, batch, samples, seed, steps) -> RunRecord:
    return RunRecord(row, alpha, beta, batch, samples, float("nan"), float("nan"), seed, steps)


def grid_search(
    trainer: Trainer, grid: GridSpec, out_dir: str, workers: int = 1
) -> list[RunRecord]:
    """One baseline row plus one row per (alpha, beta) cell per seed.

    Stage one runs once per seed and every cell of that seed branches
    from its best checkpoint; the baseline instead keeps training from
    the last checkpoint at base sizes ("no restart").  A cell that raises
    is recorded with nan rates and the sweep continues.  Cells are
    independent after the shared stage one, so workers > 1 runs them
    concurrently; the results table is assembled afterwards in row order.
    """
    if workers < 1:
        raise ConfigError("worker count must be at least 1")
    os.makedirs(out_dir, exist_ok=True)
    base_trainer = dataclasses.replace(
        trainer,
        base_cfg=trainer.sized_cfg(grid.base_batch, grid.base_samples, 0),
    )
    records: list[RunRecord] = []
    for seed in grid.seeds:
        seed_dir = os.path.join(out_dir, f"seed{seed}")
        stage1_dir = os.path.join(seed_dir, "stage1")
        stage1 = run_stage_one(base_trainer, grid.stage1_steps, seed, stage1_dir)
        best = track_best(stage1)
        last_step = stage1[-1].step

        def run_baseline() -> RunRecord:
            restore = load_checkpoint(os.path.join(stage1_dir, f"ckpt-{last_step:08d}.ckpt"))
            cfg = base_trainer.sized_cfg(grid.base_batch, grid.base_samples, grid.stage2_steps)
            leg = base_trainer.run(
                cfg, seed, os.path.join(seed_dir, "baseline"), resume=restore, stage=1
            )
            peak = _best_leg_record(leg)
            return RunRecord(
                1, 1.0, 1.0, grid.base_batch, grid.base_samples,
                peak.train_success, peak.test_success, seed, grid.stage2_steps,
            )

        def run_cell(row: int, alpha: float, beta: float) -> RunRecord:
            batch1, samples1 = scale_hyperparams(
                grid.base_batch, grid.base_samples, ScalePair(alpha, beta)
            )
            restore = load_checkpoint(os.path.join(stage1_dir, best.checkpoint))
            cfg = base_trainer.sized_cfg(batch1, samples1, grid.stage2_steps)
            cell_dir = os.path.join(seed_dir, f"cell-a{alpha}-b{beta}")
            leg = base_trainer.run(cfg, seed, cell_dir, resume=restore, stage=2)
            peak = _best_leg_record(leg)
            return RunRecord(
                row, alpha, beta, batch1, samples1,
                peak.train_success, peak.test_success, seed, grid.stage2_steps,
            )

        jobs: list[Callable[[], RunRecord]] = [run_baseline]
        fallbacks = [
            _failure_record(1, 1.0, 1.0, grid.base_batch, grid.base_samples, seed, grid.stage2_steps)
        ]
        for i, (alpha, beta) in enumerate(grid.cells(), start=2):
            jobs.append(lambda row=i, a=alpha, b=beta: run_cell(row, a, b))
            batch1, samples1 = scale_hyperparams(
                grid.base_batch, grid.base_samples, ScalePair(alpha, beta)
            )
            fallbacks.append(_failure_record(i, alpha, beta, batch1, samples1, seed, grid.stage2_steps))

        def guarded(job, fallback):
            try:
                return job()
            except DeskRLError:
                return fallback

        if workers == 1:
            seed_records = [guarded(job, fb) for job, fb in zip(jobs, fallbacks)]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(guarded, job, fb) for job, fb in zip(jobs, fallbacks)]
                seed_records = [f.result() for f in futures]
        records.extend(seed_records)

    export_table(records, os.path.join(out_dir, "results.csv"))
    return records


def recommend_scales(table: list[RunRecord]) -> ScalePair:
    """The (alpha, beta) with the best mean test rate; ties favor larger
    alpha, then larger beta.  Failed rows (nan) drop out of the means."""
    if not table:
        raise ConfigError("cannot recommend scales from an empty table")
    groups: dict[tuple[float, float], list[float]] = {}
    for rec in table:
        if not math.isnan(rec.test_success):
            groups.setdefault((rec.alpha, rec.beta), []).append(rec.test_success)
    if not groups:
        raise ConfigError("every row in the table failed; nothing to recommend")
    ranked = sorted(
        groups.items(),
        key=lambda kv: (float(np.mean(kv[1])), kv[0][0], kv[0][1]),
        reverse=True,
    )
    alpha, beta = ranked[0][0]
    return ScalePair(alpha, beta)
