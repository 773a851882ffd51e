"""Checkpoint files, append-only metrics logs, and result-table export.

The checkpoint container is one self-contained binary file:

    bytes 0..16    magic ``DESKRLCHECKPOINT``
    bytes 16..20   u32 format version (little-endian)
    bytes 20..24   u32 reserved, zero
    bytes 24..32   u64 length of the metadata block
    next           UTF-8 JSON metadata (run id, step, slice directory, Adam
                   scalars, generator seed, success rates)
    next           parameter vector, float64 little-endian
    next           Adam first moments m, then second moments v, same layout
    next           generator state words, u64 little-endian
    last 8 bytes   checksum: first 8 bytes of SHA-256 over everything above

Everything numeric rides as raw 64-bit little-endian values, so a
save/load roundtrip is the identity bit for bit; the JSON block carries
only names, counts, and scalars whose text form round-trips exactly.
Demonstration datasets use the same container discipline with their own
magic. Metrics logs are plain comma-separated lines, append-only, with
steps enforced non-decreasing; a truncated trailing line is ignored on
read so a crash never poisons the file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .envs import DemoTrajectory, EnvConfig
from .errors import (
    CheckpointIntegrityError,
    CheckpointNotFoundError,
    CheckpointVersionError,
    ConfigError,
    DemoFormatError,
    MetricsOrderError,
)
from .nn import AdamState, ParamStore
from .rng import STATE_WORDS

CHECKPOINT_MAGIC = b"DESKRLCHECKPOINT"
DEMO_MAGIC = b"DESKRLDEMOBUNDLE"
CHECKPOINT_VERSION = 1
DEMO_VERSION = 1
TRAINER_KINDS = ("ppo", "bc")

METRICS_HEADER = "step,train_success,test_success,stage,stamp"
TRENDLINE_HEADER = "step,train_success,test_success,stage"
GRID_HEADER = "row,alpha,beta,batch,samples,train_success,test_success,seed,stage2_steps"

_HEAD = struct.Struct("<16sIIQ")  # magic, version, reserved, meta length
_CHECKSUM_BYTES = 8


# -- checkpoints -------------------------------------------------------------


@dataclass
class Checkpoint:
    """Full training state at one step: everything a resume needs."""

    run_id: str
    step: int
    trainer_kind: str  # "ppo" | "bc"
    env_fingerprint: str
    params: np.ndarray  # flat float64 parameter vector
    slices: list[tuple[str, int, int]]  # ParamStore directory (name, rows, cols)
    adam: AdamState
    rng_seed: int
    rng_words: np.ndarray  # uint64 generator state words
    train_success: float
    test_success: float
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        if self.trainer_kind not in TRAINER_KINDS:
            raise ConfigError(f"trainer kind must be one of {TRAINER_KINDS}")
        self.params = np.asarray(self.params, dtype=np.float64)
        self.rng_words = np.asarray(self.rng_words, dtype=np.uint64)
        if self.rng_words.shape != (STATE_WORDS,):
            raise ConfigError(f"generator state must have {STATE_WORDS} words")
        total = sum(r * c for _, r, c in self.slices)
        if total != self.params.size:
            raise ConfigError(
                f"slice directory covers {total} entries, parameter vector has {self.params.size}"
            )
        if self.adam.m.shape != self.params.shape or self.adam.v.shape != self.params.shape:
            raise ConfigError("Adam moment vectors must match the parameter vector")

    def param_store(self) -> ParamStore:
        return ParamStore.from_directory(self.slices, self.params)


def _checksum(blob: bytes) -> bytes:
    return hashlib.sha256(blob).digest()[:_CHECKSUM_BYTES]


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    """Write atomically: a crash mid-save never leaves a partial file."""
    meta = {
        "run_id": ckpt.run_id,
        "step": int(ckpt.step),
        "trainer_kind": ckpt.trainer_kind,
        "env_fingerprint": ckpt.env_fingerprint,
        "n_params": int(ckpt.params.size),
        "slices": [[name, int(r), int(c)] for name, r, c in ckpt.slices],
        "adam": {
            "t": int(ckpt.adam.t),
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
        },
        "rng_seed": int(ckpt.rng_seed),
        "train_success": float(ckpt.train_success),
        "test_success": float(ckpt.test_success),
    }
    meta_blob = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    parts = [
        _HEAD.pack(CHECKPOINT_MAGIC, ckpt.version, 0, len(meta_blob)),
        meta_blob,
        np.ascontiguousarray(ckpt.params, dtype="<f8").tobytes(),
        np.ascontiguousarray(ckpt.adam.m, dtype="<f8").tobytes(),
        np.ascontiguousarray(ckpt.adam.v, dtype="<f8").tobytes(),
        np.ascontiguousarray(ckpt.rng_words, dtype="<u8").tobytes(),
    ]
    blob = b"".join(parts)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.write(_checksum(blob))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointNotFoundError(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size + _CHECKSUM_BYTES:
        raise CheckpointIntegrityError(f"{path}: file too short to be a checkpoint")
    magic = raw[:16]
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointIntegrityError(f"{path}: bad magic, not a checkpoint file")
    body, trailer = raw[:-_CHECKSUM_BYTES], raw[-_CHECKSUM_BYTES:]
    if _checksum(body) != trailer:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch (corrupt or truncated)")
    _, version, _, meta_len = _HEAD.unpack_from(body, 0)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    cursor = _HEAD.size
    if cursor + meta_len > len(body):
        raise CheckpointIntegrityError(f"{path}: metadata block overruns the file")
    try:
        meta = json.loads(body[cursor : cursor + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointIntegrityError(f"{path}: unreadable metadata block") from exc
    cursor += meta_len

    n = int(meta["n_params"])
    need = 3 * n * 8 + STATE_WORDS * 8
    if len(body) - cursor != need:
        raise CheckpointIntegrityError(
            f"{path}: array section holds {len(body) - cursor} bytes, expected {need}"
        )

    def f64(count):
        nonlocal cursor
        out = np.frombuffer(body, dtype="<f8", count=count, offset=cursor).astype(np.float64)
        cursor += count * 8
        return out

    params = f64(n)
    m = f64(n)
    v = f64(n)
    rng_words = np.frombuffer(body, dtype="<u8", count=STATE_WORDS, offset=cursor).astype(np.uint64)
    a = meta["adam"]
    return Checkpoint(
        run_id=str(meta["run_id"]),
        step=int(meta["step"]),
        trainer_kind=str(meta["trainer_kind"]),
        env_fingerprint=str(meta["env_fingerprint"]),
        params=params,
        slices=[(str(s[0]), int(s[1]), int(s[2])) for s in meta["slices"]],
        adam=AdamState(
            m=m, v=v, t=int(a["t"]), lr=float(a["lr"]),
            beta1=float(a["beta1"]), beta2=float(a["beta2"]), eps=float(a["eps"]),
        ),
        rng_seed=int(meta["rng_seed"]),
        rng_words=rng_words,
        train_success=float(meta["train_success"]),
        test_success=float(meta["test_success"]),
        version=int(version),
    )


# -- metrics logs -------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation: success rates at a step, with a stage marker."""

    step: int
    train_success: float
    test_success: float
    stage: int = 1
    stamp: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.step < 0:
            raise ConfigError("metrics step must be non-negative")
        for rate in (self.train_success, self.test_success):
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"success rate {rate} outside [0, 1]")
        if self.stage not in (1, 2):
            raise ConfigError("stage marker must be 1 or 2")


def _format_record(rec: MetricsRecord) -> str:
    return f"{rec.step},{rec.train_success!r},{rec.test_success!r},{rec.stage},{rec.stamp!r}\n"


def _parse_line(line: str) -> MetricsRecord:
    parts = line.rstrip("\n").split(",")
    if len(parts) != 5:
        raise ValueError(f"expected 5 fields, got {len(parts)}")
    return MetricsRecord(
        step=int(parts[0]),
        train_success=float(parts[1]),
        test_success=float(parts[2]),
        stage=int(parts[3]),
        stamp=float(parts[4]),
    )


def _last_step(path: str) -> int | None:
    """Step of the last complete record, reading only the file's tail."""
    try:
        size = os.path.getsize(path)
    except OSError:
        return None
    with open(path, "rb") as fh:
        fh.seek(max(0, size - 4096))
        tail = fh.read().decode("utf-8", errors="replace")
    last = None
    for line in tail.splitlines(keepends=True):
        if not line.endswith("\n") or line.startswith("step,"):
            continue
        try:
            last = _parse_line(line)
        except (ValueError, ConfigError):
            continue
    return None if last is None else last.step


def append_metrics(path: str, record: MetricsRecord) -> None:
    """Append one record; steps must never decrease within a file."""
    if record.stamp == 0.0:
        record = MetricsRecord(
            record.step, record.train_success, record.test_success, record.stage, time.time()
        )
    prev = _last_step(path)
    if prev is not None and record.step < prev:
        raise MetricsOrderError(f"step {record.step} after step {prev} in {path}")
    fresh = prev is None and not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if fresh:
            fh.write(METRICS_HEADER + "\n")
        fh.write(_format_record(record))
        fh.flush()


def read_metrics(path: str) -> list[MetricsRecord]:
    """Parse every complete record; a truncated final line is ignored."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no metrics log at {path}")
    records: list[MetricsRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        if i == 0 and line.rstrip("\n") == METRICS_HEADER:
            continue
        if not line.endswith("\n"):
            break  # crash-truncated tail: the prefix is still valid
        rec = _parse_line(line)
        if records and rec.step < records[-1].step:
            raise MetricsOrderError(f"{path}: step went backwards at line {i + 1}")
        records.append(rec)
    return records


# -- export -------------------------------------------------------------------


def export_trendline(history, path: str) -> None:
    """Plot-ready success-rate series; wall-clock stamps are dropped so
    re-exporting identical history is byte-identical."""
    history = list(history)
    if not history:
        raise ConfigError("cannot export an empty history")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRENDLINE_HEADER + "\n")
        for rec in history:
            fh.write(f"{rec.step},{rec.train_success!r},{rec.test_success!r},{rec.stage}\n")


def export_table(records, path: str) -> None:
    """Write grid-search rows under the documented header.

    Accepts anything iterable whose elements either provide ``as_row()``
    or are themselves sequences matching the header's nine columns.
    """
    records = list(records)
    if not records:
        raise ConfigError("cannot export an empty table")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(GRID_HEADER + "\n")
        for rec in records:
            row = rec.as_row() if hasattr(rec, "as_row") else tuple(rec)
            if len(row) != len(GRID_HEADER.split(",")):
                raise ConfigError(f"table row has {len(row)} fields, header has 9")
            fh.write(",".join(_cell(x) for x in row) + "\n")


def _cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


# -- demonstration datasets ----------------------------------------------------


def save_demos(path: str, cfg: EnvConfig, demos: list[DemoTrajectory]) -> None:
    """Persist expert trajectories with the config fingerprint they came from."""
    if not demos:
        raise DemoFormatError("refusing to write an empty demo file")
    first = demos[0]
    n_points, channels = first.points.shape[1], first.points.shape[2]
    proprio_w, action_w = first.proprios.shape[1], first.actions.shape[1]
    episodes = []
    arrays = []
    for d in demos:
        T = d.actions.shape[0]
        if d.points.shape != (T, n_points, channels) or d.proprios.shape != (T, proprio_w):
            raise DemoFormatError("trajectories disagree on observation shape")
        if d.actions.shape != (T, action_w):
            raise DemoFormatError("trajectories disagree on action width")
        episodes.append({"length": int(T), "success": bool(d.success)})
        arrays += [d.points, d.proprios, d.actions]
    meta = {
        "task": cfg.task,
        "fingerprint": cfg.fingerprint(),
        "count": len(demos),
        "n_points": int(n_points),
        "point_channels": int(channels),
        "proprio_width": int(proprio_w),
        "action_dim": int(action_w),
        "episodes": episodes,
    }
    meta_blob = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    parts = [_HEAD.pack(DEMO_MAGIC, DEMO_VERSION, 0, len(meta_blob)), meta_blob]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    blob = b"".join(parts)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(blob)
        fh.write(_checksum(blob))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_demos(path: str) -> tuple[dict, list[DemoTrajectory]]:
    """Read a demo file back; returns (metadata, trajectories)."""
    if not os.path.exists(path):
        raise DemoFormatError(f"no demo file at {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEAD.size + _CHECKSUM_BYTES or raw[:16] != DEMO_MAGIC:
        raise DemoFormatError(f"{path}: not a demo file")
    body, trailer = raw[:-_CHECKSUM_BYTES], raw[-_CHECKSUM_BYTES:]
    if _checksum(body) != trailer:
        raise DemoFormatError(f"{path}: checksum mismatch (corrupt or truncated)")
    _, version, _, meta_len = _HEAD.unpack_from(body, 0)
    if version != DEMO_VERSION:
        raise DemoFormatError(f"{path}: unknown demo format version {version}")
    cursor = _HEAD.size
    try:
        meta = json.loads(body[cursor : cursor + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DemoFormatError(f"{path}: unreadable metadata block") from exc
    cursor += meta_len
    N, C = int(meta["n_points"]), int(meta["point_channels"])
    P, A = int(meta["proprio_width"]), int(meta["action_dim"])
    demos = []
    for ep in meta["episodes"]:
        T = int(ep["length"])
        sizes = (T * N * C, T * P, T * A)
        shapes = ((T, N, C), (T, P), (T, A))
        chunks = []
        for count, shape in zip(sizes, shapes):
            if cursor + count * 8 > len(body):
                raise DemoFormatError(f"{path}: trajectory data overruns the file")
            chunks.append(
                np.frombuffer(body, dtype="<f8", count=count, offset=cursor)
                .astype(np.float64)
                .reshape(shape)
            )
            cursor += count * 8
        demos.append(
            DemoTrajectory(
                points=chunks[0], proprios=chunks[1], actions=chunks[2],
                success=bool(ep["success"]),
            )
        )
    if cursor != len(body):
        raise DemoFormatError(f"{path}: {len(body) - cursor} trailing bytes after trajectories")
    if len(demos) != int(meta["count"]):
        raise DemoFormatError(f"{path}: episode count disagrees with header")
    return meta, demos
