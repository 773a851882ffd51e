"""Checkpoint resume is bit-exact, not approximately right.

An uninterrupted run and a split run (train, stop at a checkpoint,
restore, continue) produce byte-identical parameters, optimizer
moments, and metric histories.  Nothing here is tolerance-based: the
rollout generator state rides in the checkpoint, PPO recomputes its
reference log-probabilities from the stored parameters, and the BC
sampler derives its stream position from the step counter alone.
"""

import os
import tempfile
from dataclasses import replace

import numpy as np

from deskrl.envs import make_config
from deskrl.persistence import load_checkpoint
from deskrl.ppo import PPOConfig, train_ppo

env_cfg = make_config("reach2d", horizon=40)
base = replace(
    PPOConfig(),
    samples_per_step=80,
    minibatch_size=40,
    epochs=2,
    total_steps=240,
    eval_period=80,
    eval_episodes=4,
)
work = tempfile.mkdtemp(prefix="resume-")

full = train_ppo(base, env_cfg, seed=7, out_dir=os.path.join(work, "full"))
print(f"uninterrupted: {len(full)} evaluations, steps {[r.step for r in full]}")

first = train_ppo(
    replace(base, total_steps=160), env_cfg, seed=7, out_dir=os.path.join(work, "first")
)
ckpt = load_checkpoint(os.path.join(work, "first", "ckpt-00000160.ckpt"))
print(f"stopped at step {ckpt.step}, restored from disk")

second = train_ppo(
    replace(base, total_steps=80),
    env_cfg,
    seed=7,
    out_dir=os.path.join(work, "second"),
    resume=ckpt,
)

# the resumed run's entry evaluation re-measures the restore point
assert second[0] == first[-1]
assert first + second[1:] == full
print("metric histories match record for record")

end_full = load_checkpoint(os.path.join(work, "full", "ckpt-00000240.ckpt"))
end_split = load_checkpoint(os.path.join(work, "second", "ckpt-00000240.ckpt"))
assert np.array_equal(end_full.params, end_split.params)
assert np.array_equal(end_full.adam.m, end_split.adam.m)
assert np.array_equal(end_full.adam.v, end_split.adam.v)
assert np.array_equal(end_full.rng_words, end_split.rng_words)
print("parameters, Adam moments, and generator state are byte-identical")
