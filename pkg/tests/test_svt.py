import math

import numpy as np
import pytest

from _helpers import delta_consistency_case, random_rig, splat_oracle
from vmkit.errors import InvalidArgumentError
from vmkit.geom import Polyline, SE3Pose
from vmkit.nnkern import MlpParams
from vmkit.svt import (
    BevGridSpec,
    CameraModel,
    DepthBins,
    FeatureGrid,
    backward_sample,
    channel_fuse,
    depth_to_bins,
    encode_sd_map,
    forward_splat,
    lidar_to_depthmap,
    project_point,
    sd_cross_attend,
    sinusoidal_embed,
)
from vmkit.nnkern import attention


def axis_camera(**kw):
    """Camera at the ego origin whose frame equals the ego frame (extrinsic = identity)."""
    base = dict(fx=1000.0, fy=1000.0, cx=800.0, cy=450.0, width=1600, height=900, extrinsic=SE3Pose.identity())
    base.update(kw)
    return CameraModel(**base)


def test_project_point_examples():
    cam = axis_camera()
    assert project_point(cam, [0, 0, 10]) == (800.0, 450.0, 10.0, True)
    assert project_point(cam, [0, 0, -3])[3] is False
    u, v, d, ok = project_point(cam, [1, 0, 10])
    assert u == pytest.approx(1000 * 0.1 + 800) and ok


def test_looking_camera_projects_forward_point_to_centre():
    cam = CameraModel.looking(0.0, (0, 0, 1.5))
    u, v, d, ok = project_point(cam, [20, 0, 1.5])
    assert ok and u == pytest.approx(800) and v == pytest.approx(450) and d == pytest.approx(20)
    # a point to the ego's left appears on the image's left
    assert project_point(cam, [20, 2, 1.5])[0] < 800
    # a point above appears higher in the image
    assert project_point(cam, [20, 0, 3.0])[1] < 450
    behind = CameraModel.looking(math.pi, (0, 0, 1.5))
    assert project_point(behind, [20, 0, 1.5])[3] is False


def test_lidar_depthmap():
    cam = axis_camera()
    assert not lidar_to_depthmap(cam, np.zeros((0, 3)), stride=4).depth.any()
    dm = lidar_to_depthmap(cam, [[0, 0, 7.5]], stride=4)
    assert dm.depth.shape == (225, 400)
    assert np.count_nonzero(dm.depth) == 1 and dm.depth[450 // 4, 800 // 4] == 7.5
    dm = lidar_to_depthmap(cam, [[0, 0, 9.0], [0.001, 0, 5.0]], stride=4)
    assert np.count_nonzero(dm.depth) == 1 and dm.depth.max() == 5.0
    with pytest.raises(InvalidArgumentError):
        lidar_to_depthmap(cam, [], stride=0)


def test_depth_to_bins():
    bins = DepthBins(1.0, 56.0, 1.0)
    assert bins.count == 55
    assert depth_to_bins(1.0, bins) == (0, True)
    assert depth_to_bins(55.99, bins) == (54, True)
    assert depth_to_bins(0.5, bins)[1] is False
    assert depth_to_bins(56.0, bins)[1] is False
    idx, ok = depth_to_bins(np.array([1.0, 10.5, 60.0]), bins)
    np.testing.assert_array_equal(idx[:2], [0, 9])
    np.testing.assert_array_equal(ok, [True, True, False])


def _one_pixel_setup():
    cam = axis_camera(fx=10.0, fy=10.0, cx=0.5, cy=0.5, width=1, height=1,
                      extrinsic=CameraModel.looking(0.0, (0, 0, 0)).extrinsic)
    spec = BevGridSpec(10, 40, (0.0, 40.0), (-5.0, 5.0))  # 1 m cells
    return cam, spec


def test_forward_splat_single_contribution():
    cam, spec = _one_pixel_setup()
    bins = DepthBins(1.0, 56.0, 1.0)
    dist = np.zeros((55, 1, 1))
    dist[9] = 1.0  # bin centre 10.5 m
    grid = forward_splat([np.ones((1, 1, 1))], [dist], [cam], spec, bins)
    assert np.count_nonzero(grid.data) == 1
    assert grid.data[0, 5, 10] == 1.0


def test_forward_splat_two_bins():
    cam, spec = _one_pixel_setup()
    bins = DepthBins(1.0, 56.0, 1.0)
    dist = np.zeros((55, 1, 1))
    dist[4] = dist[19] = 0.5  # centres 5.5 m and 20.5 m straight ahead
    grid = forward_splat([np.ones((1, 1, 1))], [dist], [cam], spec, bins)
    assert grid.data[0, 5, 5] == 0.5 and grid.data[0, 5, 20] == 0.5
    assert grid.data.sum() == 1.0


def test_forward_splat_outside_grid():
    cam, _ = _one_pixel_setup()
    spec = BevGridSpec(10, 10, (-30.0, -20.0), (-5.0, 5.0))
    dist = np.full((55, 1, 1), 1 / 55)
    grid = forward_splat([np.ones((1, 1, 1))], [dist], [cam], spec, DepthBins())
    assert not grid.data.any()


def test_forward_splat_matches_loop_oracle(rng):
    spec, cams, (h, w) = random_rig(rng, n_cams=2, stride=16)
    bins = DepthBins(1.0, 21.0, 1.0)
    feats = [rng.normal(size=(2, h, w)).astype(np.float32) for _ in cams]
    dists = []
    for _ in cams:
        logits = rng.normal(size=(bins.count, h, w))
        e = np.exp(logits)
        dists.append((e / e.sum(axis=0)).astype(np.float32))
    grid = forward_splat(feats, dists, cams, spec, bins)
    expected = splat_oracle([f.astype(np.float64) for f in feats], [d.astype(np.float64) for d in dists], cams, spec, bins)
    np.testing.assert_allclose(grid.data, expected, rtol=1e-5, atol=1e-5)


def test_forward_splat_is_bit_stable(rng):
    spec, cams, (h, w) = random_rig(rng)
    bins = DepthBins()
    feats = [rng.normal(size=(3, h, w)) for _ in cams]
    dists = [np.full((bins.count, h, w), 1 / bins.count) for _ in cams]
    a = forward_splat(feats, dists, cams, spec, bins)
    b = forward_splat(feats, dists, cams, spec, bins)
    assert a.data.tobytes() == b.data.tobytes()


def test_forward_splat_shape_errors(rng):
    spec, cams, (h, w) = random_rig(rng, n_cams=1)
    with pytest.raises(InvalidArgumentError):
        forward_splat([np.zeros((1, h, w))], [np.zeros((3, h, w))], cams, spec, DepthBins())


def test_backward_sample_constant_field(rng):
    spec, cams, (h, w) = random_rig(rng)
    feats = [np.full((1, h, w), 3.0) for _ in cams]
    grid, mask = backward_sample(feats, cams, spec)
    assert mask.any()
    np.testing.assert_allclose(grid.data[0][mask > 0], 3.0, rtol=1e-6)
    assert not grid.data[0][mask == 0].any()


def test_backward_sample_behind_cameras():
    cam = CameraModel.looking(0.0, (0, 0, 1.5))
    spec = BevGridSpec(10, 10, (-20.0, -10.0), (-5.0, 5.0))
    grid, mask = backward_sample([np.ones((1, 90, 160))], [cam], spec)
    assert not mask.any() and not grid.data.any()


def test_backward_hits_monotone_in_cameras(rng):
    for _ in range(10):
        spec, cams, (h, w) = random_rig(rng, n_cams=3)
        feats = [np.ones((1, h, w)) for _ in cams]
        prev = None
        for k in range(1, 4):
            _, mask = backward_sample(feats[:k], cams[:k], spec)
            if prev is not None:
                assert np.all(mask >= prev)
            prev = mask


def test_forward_backward_delta_agreement(rng):
    done = 0
    while done < 30:
        spec, cams, hw = random_rig(rng)
        case = delta_consistency_case(rng, spec, cams, hw)
        if case is None:
            continue
        back_val, fwd_cell, cell = case
        assert back_val > 0
        assert fwd_cell == cell
        done += 1


def test_sd_embedding():
    e = sinusoidal_embed([[0.0, 0.0]], 16)
    np.testing.assert_array_equal(e[0], [0, 1] * 8)
    lines = [Polyline([[0, 0, 0], [10, 0, 0]]), Polyline([[0, 5, 0], [3, 9, 0], [8, 9, 0]])]
    tok = encode_sd_map(lines, 7, 12)
    assert tok.shape == (14, 12)
    with pytest.raises(InvalidArgumentError):
        encode_sd_map(lines, 7, 11)
    with pytest.raises(InvalidArgumentError):
        encode_sd_map(lines, 1, 12)


def test_sd_embedding_period():
    dim, temp = 16, 10000.0
    n = (dim // 2 + 1) // 2
    slowest = temp ** (-(n - 1) / n)
    period = 2 * math.pi / slowest
    p = np.array([[3.7, -1.2]])
    a = sinusoidal_embed(p, dim, temp)
    b = sinusoidal_embed(p + [period, 0.0], dim, temp)
    # slowest x pair sits at the end of the x half
    sl = slice(dim // 2 - 2, dim // 2)
    np.testing.assert_allclose(b[0, sl], a[0, sl], atol=1e-9)
    np.testing.assert_allclose(a[0, sl], [math.sin(3.7 * slowest), math.cos(3.7 * slowest)], atol=1e-12)
    # y half untouched by an x translation
    np.testing.assert_array_equal(a[0, dim // 2 :], b[0, dim // 2 :])


def _grid(rng, c=3, spec=None):
    spec = spec or BevGridSpec(6, 8, (0.0, 8.0), (0.0, 6.0))
    return FeatureGrid(spec, rng.normal(size=(c, spec.rows, spec.cols)))


def test_sd_cross_attend(rng):
    g = _grid(rng)
    tok = rng.normal(size=(5, 4))
    wq, wk = rng.normal(size=(3, 6)), rng.normal(size=(4, 6))
    out = sd_cross_attend(g, tok, wq, wk, np.zeros((4, 3)))
    np.testing.assert_array_equal(out.data, g.data)
    one = rng.normal(size=(1, 4))
    wv = rng.normal(size=(4, 3))
    out = sd_cross_attend(g, one, wq, wk, wv)
    np.testing.assert_allclose(out.data - g.data, np.broadcast_to((one @ wv)[0][:, None, None], g.data.shape), atol=1e-5)
    out = sd_cross_attend(g, tok, wq, wk, wv)
    q = g.data.reshape(3, -1).T.astype(np.float64)
    expected = g.data + attention(q @ wq, tok @ wk, tok @ wv).T.reshape(g.data.shape)
    np.testing.assert_allclose(out.data, expected, atol=1e-5)
    with pytest.raises(InvalidArgumentError):
        sd_cross_attend(g, tok, rng.normal(size=(2, 6)), wk, wv)


def test_channel_fuse(rng):
    a, b = _grid(rng), _grid(rng)
    zero = MlpParams.init([6, 3, 3], rng, zero=True)
    np.testing.assert_allclose(channel_fuse(a, b, zero).data, (a.data + b.data) / 2, atol=1e-6)
    big = MlpParams.init([6, 3, 3], rng, zero=True)
    big.biases[-1][:] = 50.0
    np.testing.assert_allclose(channel_fuse(a, b, big).data, a.data, atol=1e-5)
    p = MlpParams.init([6, 3, 3], rng)
    np.testing.assert_allclose(channel_fuse(a, a, p).data, a.data, atol=1e-6)
    for _ in range(10):
        p = MlpParams.init([6, 5, 3], rng)
        out = channel_fuse(a, b, p).data
        lo, hi = np.minimum(a.data, b.data), np.maximum(a.data, b.data)
        assert np.all(out >= lo - 1e-6) and np.all(out <= hi + 1e-6)
    other = _grid(rng, spec=BevGridSpec(6, 8, (0.0, 16.0), (0.0, 6.0)))
    with pytest.raises(InvalidArgumentError):
        channel_fuse(a, other, zero)
