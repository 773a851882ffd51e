"""Persistence tests: roundtrip bit-exactness, corruption handling, logs."""

import numpy as np
import pytest

from deskrl import envs, persistence as ps
from deskrl.errors import (
    CheckpointIntegrityError,
    CheckpointNotFoundError,
    CheckpointVersionError,
    ConfigError,
    DemoFormatError,
    MetricsOrderError,
)
from deskrl.nn import AdamState, ParamStore
from deskrl.rng import STATE_WORDS, make_generator, state_words


def make_checkpoint(seed=0, n_a=12, n_b=6):
    gen = make_generator("ckpt-test", seed)
    store = ParamStore()
    store.add("w", gen.normal(size=(3, n_a // 3)))
    store.add("b", gen.normal(size=(1, n_b)))
    n = store.size
    adam = AdamState(
        m=gen.normal(size=n), v=np.abs(gen.normal(size=n)), t=17, lr=1e-3
    )
    return ps.Checkpoint(
        run_id="run-07",
        step=4000,
        trainer_kind="ppo",
        env_fingerprint=envs.make_config("reach2d").fingerprint(),
        params=store.flat,
        slices=store.directory(),
        adam=adam,
        rng_seed=seed,
        rng_words=state_words(gen),
        train_success=0.625,
        test_success=0.4375,
    )


# -- checkpoint container ------------------------------------------------------


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    path = str(tmp_path / "a.ckpt")
    ckpt = make_checkpoint()
    ps.save_checkpoint(path, ckpt)
    back = ps.load_checkpoint(path)
    assert back.params.tobytes() == ckpt.params.tobytes()
    assert back.adam.m.tobytes() == ckpt.adam.m.tobytes()
    assert back.adam.v.tobytes() == ckpt.adam.v.tobytes()
    assert back.rng_words.tobytes() == ckpt.rng_words.tobytes()
    assert (back.adam.t, back.adam.lr, back.adam.beta1, back.adam.beta2, back.adam.eps) == (
        ckpt.adam.t, ckpt.adam.lr, ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.eps
    )
    assert back.slices == ckpt.slices
    assert (back.run_id, back.step, back.trainer_kind) == ("run-07", 4000, "ppo")
    assert back.env_fingerprint == ckpt.env_fingerprint
    assert (back.train_success, back.test_success) == (0.625, 0.4375)
    assert (back.rng_seed, back.version) == (0, ps.CHECKPOINT_VERSION)


def test_checkpoint_param_store_reconstruction(tmp_path):
    path = str(tmp_path / "b.ckpt")
    ckpt = make_checkpoint(seed=3)
    ps.save_checkpoint(path, ckpt)
    store = ps.load_checkpoint(path).param_store()
    assert store.names() == ["w", "b"]
    assert store.shape("w") == (3, 4)
    assert store.flat.tobytes() == ckpt.params.tobytes()


def test_checkpoint_missing_file():
    with pytest.raises(CheckpointNotFoundError):
        ps.load_checkpoint("/nonexistent/path.ckpt")


def test_checkpoint_truncation_always_detected(tmp_path):
    path = str(tmp_path / "c.ckpt")
    ps.save_checkpoint(path, make_checkpoint())
    blob = open(path, "rb").read()
    for cut in (len(blob) - 3, len(blob) // 2, 20):
        open(path, "wb").write(blob[:cut])
        with pytest.raises(CheckpointIntegrityError):
            ps.load_checkpoint(path)


def test_checkpoint_bitflip_detected(tmp_path):
    path = str(tmp_path / "d.ckpt")
    ps.save_checkpoint(path, make_checkpoint())
    blob = bytearray(open(path, "rb").read())
    blob[len(blob) // 2] ^= 0x40
    open(path, "wb").write(bytes(blob))
    with pytest.raises(CheckpointIntegrityError):
        ps.load_checkpoint(path)


def test_checkpoint_wrong_magic(tmp_path):
    path = str(tmp_path / "e.ckpt")
    open(path, "wb").write(b"\x00" * 64)
    with pytest.raises(CheckpointIntegrityError):
        ps.load_checkpoint(path)


def test_checkpoint_unknown_version(tmp_path):
    # a future-version file with a valid checksum must fail on version,
    # not on integrity
    path = str(tmp_path / "f.ckpt")
    ps.save_checkpoint(path, make_checkpoint())
    blob = bytearray(open(path, "rb").read())[: -ps._CHECKSUM_BYTES]
    blob[16:20] = (99).to_bytes(4, "little")
    body = bytes(blob)
    open(path, "wb").write(body + ps._checksum(body))
    with pytest.raises(CheckpointVersionError):
        ps.load_checkpoint(path)


def test_checkpoint_field_validation():
    ckpt = make_checkpoint()
    with pytest.raises(ConfigError):
        ps.Checkpoint(
            run_id="x", step=0, trainer_kind="sac",
            env_fingerprint="", params=ckpt.params, slices=ckpt.slices,
            adam=ckpt.adam, rng_seed=0, rng_words=ckpt.rng_words,
            train_success=0.0, test_success=0.0,
        )
    with pytest.raises(ConfigError):
        ps.Checkpoint(
            run_id="x", step=0, trainer_kind="ppo",
            env_fingerprint="", params=ckpt.params[:-1], slices=ckpt.slices,
            adam=ckpt.adam, rng_seed=0, rng_words=ckpt.rng_words,
            train_success=0.0, test_success=0.0,
        )
    with pytest.raises(ConfigError):
        ps.Checkpoint(
            run_id="x", step=0, trainer_kind="ppo",
            env_fingerprint="", params=ckpt.params, slices=ckpt.slices,
            adam=ckpt.adam, rng_seed=0, rng_words=np.zeros(5, dtype=np.uint64),
            train_success=0.0, test_success=0.0,
        )


# -- metrics log ----------------------------------------------------------------


def test_metrics_append_then_read_back(tmp_path):
    path = str(tmp_path / "m.csv")
    rec = ps.MetricsRecord(step=100, train_success=0.5, test_success=0.25, stage=1)
    ps.append_metrics(path, rec)
    back = ps.read_metrics(path)
    assert back == [rec]  # stamp excluded from equality
    assert back[0].stamp > 0.0  # a real wall-clock stamp was recorded


def test_metrics_rejects_backwards_step(tmp_path):
    path = str(tmp_path / "m.csv")
    ps.append_metrics(path, ps.MetricsRecord(200, 0.5, 0.5, 1))
    ps.append_metrics(path, ps.MetricsRecord(200, 0.6, 0.5, 2))  # equal is fine
    with pytest.raises(MetricsOrderError):
        ps.append_metrics(path, ps.MetricsRecord(199, 0.5, 0.5, 2))


def test_metrics_record_validation():
    with pytest.raises(ConfigError):
        ps.MetricsRecord(-1, 0.5, 0.5, 1)
    with pytest.raises(ConfigError):
        ps.MetricsRecord(0, 1.5, 0.5, 1)
    with pytest.raises(ConfigError):
        ps.MetricsRecord(0, 0.5, -0.1, 1)
    with pytest.raises(ConfigError):
        ps.MetricsRecord(0, 0.5, 0.5, 3)


def test_metrics_bulk_10k_appends(tmp_path):
    path = str(tmp_path / "bulk.csv")
    for i in range(10_000):
        ps.append_metrics(path, ps.MetricsRecord(i, 0.5, 0.5, 1 if i < 5000 else 2))
    back = ps.read_metrics(path)
    assert len(back) == 10_000
    assert back[0].step == 0 and back[-1].step == 9_999


def test_metrics_ignores_crash_truncated_tail(tmp_path):
    path = str(tmp_path / "m.csv")
    for i in range(3):
        ps.append_metrics(path, ps.MetricsRecord(i, 0.1, 0.2, 1))
    with open(path, "a") as fh:
        fh.write("3,0.5,0.5")  # no newline: crashed mid-write
    back = ps.read_metrics(path)
    assert [r.step for r in back] == [0, 1, 2]
    # and appending afterwards still enforces order against the last full line
    ps.append_metrics(path, ps.MetricsRecord(2, 0.3, 0.4, 2))


def test_metrics_file_is_valid_prefix_under_line_truncation(tmp_path):
    path = str(tmp_path / "m.csv")
    for i in range(5):
        ps.append_metrics(path, ps.MetricsRecord(i * 10, 0.1, 0.2, 1))
    lines = open(path).readlines()
    open(path, "w").writelines(lines[:3])  # header + 2 records
    assert [r.step for r in ps.read_metrics(path)] == [0, 10]


def test_metrics_missing_file():
    with pytest.raises(FileNotFoundError):
        ps.read_metrics("/nonexistent/metrics.csv")


# -- exports ---------------------------------------------------------------------


def test_trendline_single_entry(tmp_path):
    path = str(tmp_path / "trend.csv")
    ps.export_trendline([ps.MetricsRecord(100, 0.5, 0.25, 1, stamp=123.0)], path)
    lines = open(path).read().splitlines()
    assert lines == ["step,train_success,test_success,stage", "100,0.5,0.25,1"]


def test_trendline_reexport_is_byte_identical(tmp_path):
    hist_a = [ps.MetricsRecord(i, 0.1 * i, 0.05 * i, 1, stamp=float(i)) for i in range(1, 5)]
    hist_b = [ps.MetricsRecord(i, 0.1 * i, 0.05 * i, 1, stamp=999.0 + i) for i in range(1, 5)]
    pa, pb = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    ps.export_trendline(hist_a, pa)
    ps.export_trendline(hist_b, pb)  # stamps differ, bytes must not
    assert open(pa, "rb").read() == open(pb, "rb").read()


def test_trendline_rejects_empty(tmp_path):
    with pytest.raises(ConfigError):
        ps.export_trendline([], str(tmp_path / "t.csv"))


TABLE_I_ROWS = [
    (1, 1.0, 1.0, 330, 20000, 0.65, 0.60, 0, 0),
    (2, 0.9, 1.0, 297, 20000, 0.71, 0.59, 0, 0),
    (3, 0.8, 1.0, 264, 20000, 0.57, 0.49, 0, 0),
    (4, 0.7, 1.0, 231, 20000, 0.67, 0.59, 0, 0),
    (5, 0.9, 0.875, 297, 17500, 0.72, 0.67, 0, 0),
    (6, 0.8, 0.875, 264, 17500, 0.65, 0.59, 0, 0),
    (7, 0.7, 0.875, 231, 17500, 0.66, 0.60, 0, 0),
    (8, 0.9, 0.75, 297, 15000, 0.65, 0.58, 0, 0),
    (9, 0.8, 0.75, 264, 15000, 0.66, 0.55, 0, 0),
    (10, 0.7, 0.75, 231, 15000, 0.64, 0.54, 0, 0),
]


def test_table_export_shape_and_order(tmp_path):
    path = str(tmp_path / "grid.csv")
    ps.export_table(TABLE_I_ROWS, path)
    lines = open(path).read().splitlines()
    assert lines[0] == ps.GRID_HEADER
    assert len(lines) == 11
    assert lines[1].startswith("1,1.0,1.0,330,20000,")
    assert lines[5].startswith("5,0.9,0.875,297,17500,")


def test_table_reexport_is_byte_identical(tmp_path):
    pa, pb = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    ps.export_table(TABLE_I_ROWS, pa)
    ps.export_table(TABLE_I_ROWS, pb)
    assert open(pa, "rb").read() == open(pb, "rb").read()


def test_table_rejects_empty_and_ragged(tmp_path):
    with pytest.raises(ConfigError):
        ps.export_table([], str(tmp_path / "g.csv"))
    with pytest.raises(ConfigError):
        ps.export_table([(1, 2, 3)], str(tmp_path / "g.csv"))


# -- demo files -------------------------------------------------------------------


def test_demo_roundtrip_bit_exact(tmp_path):
    path = str(tmp_path / "demos.bin")
    cfg = envs.make_config("reach2d", seed=5)
    demos = envs.generate_demos(cfg, 5)
    ps.save_demos(path, cfg, demos)
    meta, back = ps.load_demos(path)
    assert meta["task"] == "reach2d"
    assert meta["fingerprint"] == cfg.fingerprint()
    assert meta["count"] == len(demos)
    assert len(back) == len(demos)
    for da, db in zip(demos, back):
        assert da.points.tobytes() == db.points.tobytes()
        assert da.proprios.tobytes() == db.proprios.tobytes()
        assert da.actions.tobytes() == db.actions.tobytes()
        assert da.success == db.success


def test_demo_corruption_detected(tmp_path):
    path = str(tmp_path / "demos.bin")
    cfg = envs.make_config("reach2d", seed=5)
    ps.save_demos(path, cfg, envs.generate_demos(cfg, 2))
    blob = bytearray(open(path, "rb").read())
    blob[-20] ^= 0x01
    open(path, "wb").write(bytes(blob))
    with pytest.raises(DemoFormatError):
        ps.load_demos(path)


def test_demo_missing_and_wrong_file(tmp_path):
    with pytest.raises(DemoFormatError):
        ps.load_demos(str(tmp_path / "missing.bin"))
    path = str(tmp_path / "not_demos.bin")
    open(path, "wb").write(b"\x01" * 128)
    with pytest.raises(DemoFormatError):
        ps.load_demos(path)
