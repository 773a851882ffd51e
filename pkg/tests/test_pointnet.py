"""Encoder tests: set invariances at bit level, gradients against finite differences."""

import numpy as np
import pytest

from deskrl import nn, pointnet
from deskrl.errors import NonFiniteError, ShapeMismatchError
from deskrl.rng import make_generator


def make_encoder(seed, proprio_width=8, per_point=(16, 32), post=(24,)):
    spec = pointnet.build_encoder_spec(
        point_dim=2, feat_channels=3, proprio_width=proprio_width,
        per_point_widths=per_point, post_widths=post,
    )
    store = nn.ParamStore()
    pointnet.init_encoder_params(store, spec, make_generator(seed, "enc"), "enc")
    return spec, store


def random_obs(spec, gen, n_points):
    coords = gen.normal(size=(n_points, spec.point_dim))
    classes = gen.integers(0, spec.feat_channels, size=n_points)
    onehot = np.zeros((n_points, spec.feat_channels))
    onehot[np.arange(n_points), classes] = 1.0
    return pointnet.PointCloudObs(
        points=np.concatenate([coords, onehot], axis=1),
        proprio=gen.normal(size=spec.proprio_width),
    )


def test_permutation_bit_identity():
    spec, store = make_encoder(0)
    gen = make_generator(0, "perm")
    for cloud_i in range(10):
        obs = random_obs(spec, gen, n_points=64)
        base = pointnet.encode(store, spec, obs, "enc")
        for _ in range(100):
            perm = gen.permutation(64)
            shuffled = pointnet.PointCloudObs(obs.points[perm], obs.proprio)
            out = pointnet.encode(store, spec, shuffled, "enc")
            assert np.array_equal(out, base), f"cloud {cloud_i}: permutation changed bits"


def test_duplication_bit_identity():
    spec, store = make_encoder(1)
    gen = make_generator(1, "dup")
    for cloud_i in range(10):
        obs = random_obs(spec, gen, n_points=64)
        base = pointnet.encode(store, spec, obs, "enc")
        for k in (1, 3, 17):
            picks = gen.integers(0, 64, size=k)
            grown = pointnet.PointCloudObs(
                np.concatenate([obs.points, obs.points[picks]], axis=0), obs.proprio
            )
            out = pointnet.encode(store, spec, grown, "enc")
            assert np.array_equal(out, base), f"cloud {cloud_i}: duplicating {k} points changed bits"


def test_encode_is_pure():
    spec, store = make_encoder(2)
    obs = random_obs(spec, make_generator(2, "pure"), 32)
    a = pointnet.encode(store, spec, obs, "enc")
    b = pointnet.encode(store, spec, obs, "enc")
    assert np.array_equal(a, b)


def test_batched_matches_single_path():
    # the two paths use different kernels, so agreement is numerical, not bitwise
    spec, store = make_encoder(3)
    gen = make_generator(3, "batch")
    obs_list = [random_obs(spec, gen, 24) for _ in range(7)]
    pts = np.stack([o.points for o in obs_list])
    prop = np.stack([o.proprio for o in obs_list])
    batched = pointnet.encode_batch(store, spec, pts, prop, "enc")
    for i, obs in enumerate(obs_list):
        single = pointnet.encode(store, spec, obs, "enc")
        assert np.allclose(batched[i], single, rtol=1e-12, atol=1e-12)


def encoder_margin(store, spec, obs):
    """Distance to the nearest relu kink or pooling tie, for FD validity."""
    margin = np.inf
    H = obs.points
    j = 0
    for layer in spec.per_point.layers:
        if layer.kind == "affine":
            H = H @ store.get(f"enc.pp.W{j}") + store.get(f"enc.pp.b{j}")
            j += 1
            margin = min(margin, float(np.min(np.abs(H))))
        else:
            H = np.maximum(H, 0.0)
    top2 = np.sort(H, axis=0)[-2:, :]
    margin = min(margin, float(np.min(top2[1] - top2[0])))
    x = np.concatenate([H.max(axis=0), obs.proprio])[None, :]
    j = 0
    for layer in spec.post.layers:
        if layer.kind == "affine":
            x = x @ store.get(f"enc.post.W{j}") + store.get(f"enc.post.b{j}")
            j += 1
            margin = min(margin, float(np.min(np.abs(x))))
        else:
            x = np.maximum(x, 0.0)
    return margin


def test_single_path_gradient_matches_finite_differences():
    checked = 0
    candidate = 0
    while checked < 5:
        assert candidate < 60, "could not find enough kink-free configurations"
        spec, store = make_encoder(300 + candidate, proprio_width=5, per_point=(8, 12), post=(10,))
        gen = make_generator(candidate, "fd")
        obs = random_obs(spec, gen, 9)
        w = gen.normal(size=spec.out_width)
        candidate += 1
        if encoder_margin(store, spec, obs) < 1e-3:
            continue

        out, cache = pointnet.encode_trace(store, spec, obs, "enc")
        grad = store.zeros_grad()
        pointnet.encode_backward(store, spec, cache, w, grad, "enc")
        numeric = nn.finite_diff_grad(
            lambda s: float(w @ pointnet.encode(s, spec, obs, "enc")), store, h=1e-5
        )
        scale = np.maximum(np.abs(numeric), 1e-8)
        rel = np.max(np.abs(grad - numeric) / scale)
        assert rel <= 1e-4, f"max relative gradient error {rel:.3e}"
        checked += 1


def test_batched_backward_matches_sum_of_singles():
    spec, store = make_encoder(4, proprio_width=4, per_point=(8, 12), post=(6,))
    gen = make_generator(4, "bsum")
    obs_list = [random_obs(spec, gen, 12) for _ in range(5)]
    pts = np.stack([o.points for o in obs_list])
    prop = np.stack([o.proprio for o in obs_list])
    d_out = gen.normal(size=(5, spec.out_width))

    _, bcache = pointnet.encode_batch_trace(store, spec, pts, prop, "enc")
    grad_batch = store.zeros_grad()
    pointnet.encode_batch_backward(store, spec, bcache, d_out, grad_batch, "enc")

    grad_singles = store.zeros_grad()
    for obs, d in zip(obs_list, d_out):
        _, cache = pointnet.encode_trace(store, spec, obs, "enc")
        pointnet.encode_backward(store, spec, cache, d, grad_singles, "enc")
    assert np.allclose(grad_batch, grad_singles, rtol=1e-10, atol=1e-12)


def test_pool_tie_breaks_to_lowest_index():
    spec, store = make_encoder(5)
    gen = make_generator(5, "tie")
    obs = random_obs(spec, gen, 16)
    pts = obs.points.copy()
    pts[7] = pts[2]  # exact duplicate: rows 2 and 7 tie on every channel
    tied = pointnet.PointCloudObs(pts, obs.proprio)
    _, cache = pointnet.encode_trace(store, spec, tied, "enc")
    assert not np.any(cache.pool_idx == 7), "a tie resolved to the higher index"


def test_validation_rejects_bad_inputs():
    spec, store = make_encoder(6)
    good = random_obs(spec, make_generator(6, "val"), 8)
    with pytest.raises(ShapeMismatchError):
        pointnet.encode(store, spec, pointnet.PointCloudObs(good.points[:, :3], good.proprio), "enc")
    with pytest.raises(ShapeMismatchError):
        pointnet.encode(store, spec, pointnet.PointCloudObs(good.points, good.proprio[:3]), "enc")
    with pytest.raises(NonFiniteError):
        bad = good.points.copy()
        bad[0, 0] = np.nan
        pointnet.PointCloudObs(bad, good.proprio)
    with pytest.raises(ShapeMismatchError):
        pointnet.PointCloudObs(np.zeros((0, 5)), good.proprio)
    with pytest.raises(ShapeMismatchError):
        pointnet.encode_batch(store, spec, np.zeros((2, 4, 5)), np.zeros((3, 8)), "enc")
    with pytest.raises(ShapeMismatchError):
        pointnet.build_encoder_spec(point_dim=4)


def test_init_is_deterministic():
    _, a = make_encoder(7)
    _, b = make_encoder(7)
    assert np.array_equal(a.flat, b.flat)
    assert a.directory() == b.directory()
