"""Camera/BEV geometry for the hybrid view transformation.

Two rasters are built from per-camera image features:

* forward: each feature pixel is lifted along its ray at every depth-bin
  centre, weighted by a per-pixel depth distribution, and scatter-added into
  the BEV cell it lands in;
* backward: each BEV cell centre is lifted to a few reference heights,
  projected into every camera and bilinearly sampled.

They are merged by a channel gate computed from pooled features. SD-map
polylines enter as sinusoidally embedded tokens via cross-attention.

Frames: ego is x forward, y left, z up. Camera is x right, y down, z along
the optical axis. BEV rows run along y and columns along x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .geom import Polyline, SE3Pose, resample_uniform
from .nnkern import MlpParams, attention, mlp_forward, sigmoid

_EGO_TO_CAM_AXES = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: SE3Pose  # camera-from-ego

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError("image size must be at least 1x1")

    @classmethod
    def looking(cls, yaw: float, position=(0.0, 0.0, 1.5), pitch: float = 0.0, *, fx=1000.0, fy=None,
                width=1600, height=900, cx=None, cy=None) -> "CameraModel":
        """Camera mounted at ``position`` (ego frame) looking along ``yaw``, tilted down by ``pitch``."""
        ego_from_cam_body = SE3Pose.from_xy_yaw(position[0], position[1], yaw, position[2])
        cp, sp = math.cos(pitch), math.sin(pitch)
        tilt = SE3Pose(np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]]), np.zeros(3))
        body_from_ego = ego_from_cam_body.compose(tilt).inverse()
        axes = SE3Pose(_EGO_TO_CAM_AXES, np.zeros(3))
        return cls(
            fx, fx if fy is None else fy,
            width / 2 if cx is None else cx, height / 2 if cy is None else cy,
            int(width), int(height), axes.compose(body_from_ego),
        )

    def feature_stride(self, feat_h: int, feat_w: int) -> tuple[float, float]:
        return self.height / feat_h, self.width / feat_w


@dataclass(frozen=True)
class DepthBins:
    d_min: float = 1.0
    d_max: float = 56.0
    bin_width: float = 1.0

    def __post_init__(self):
        if not self.d_min < self.d_max or self.bin_width <= 0:
            raise InvalidArgumentError("need d_min < d_max and bin_width > 0")

    @property
    def count(self) -> int:
        return int(round((self.d_max - self.d_min) / self.bin_width))

    def centers(self) -> np.ndarray:
        return self.d_min + (np.arange(self.count) + 0.5) * self.bin_width


@dataclass(frozen=True)
class BevGridSpec:
    rows: int = 100
    cols: int = 200
    x_range: tuple[float, float] = (-50.0, 50.0)
    y_range: tuple[float, float] = (-25.0, 25.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgumentError("grid needs at least one row and column")
        if not (self.x_range[0] < self.x_range[1] and self.y_range[0] < self.y_range[1]):
            raise InvalidArgumentError("grid ranges must be non-degenerate")
        object.__setattr__(self, "x_range", tuple(float(v) for v in self.x_range))
        object.__setattr__(self, "y_range", tuple(float(v) for v in self.y_range))

    @property
    def dx(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.cols

    @property
    def dy(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.rows

    @property
    def half_extent(self) -> tuple[float, float]:
        return (self.x_range[1] - self.x_range[0]) / 2, (self.y_range[1] - self.y_range[0]) / 2

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Metric ``(x, y)`` of every cell centre, each shaped ``(rows, cols)``."""
        xs = self.x_range[0] + (np.arange(self.cols) + 0.5) * self.dx
        ys = self.y_range[0] + (np.arange(self.rows) + 0.5) * self.dy
        return np.meshgrid(xs, ys)

    def cell_of(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer ``(row, col)`` containing metric points and an in-grid mask."""
        c = np.floor((np.asarray(x) - self.x_range[0]) / self.dx).astype(np.int64)
        r = np.floor((np.asarray(y) - self.y_range[0]) / self.dy).astype(np.int64)
        inside = (c >= 0) & (c < self.cols) & (r >= 0) & (r < self.rows)
        return r, c, inside

    def continuous_index(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Fractional ``(row, col)`` where integer values are cell centres."""
        return (np.asarray(y) - self.y_range[0]) / self.dy - 0.5, (np.asarray(x) - self.x_range[0]) / self.dx - 0.5


@dataclass(frozen=True, eq=False)
class FeatureGrid:
    spec: BevGridSpec
    data: np.ndarray  # (C, rows, cols) float32

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float32)
        if d.ndim != 3 or d.shape[1:] != (self.spec.rows, self.spec.cols):
            raise InvalidArgumentError(f"grid data {d.shape} does not match spec {self.spec.rows}x{self.spec.cols}")
        if not np.all(np.isfinite(d)):
            raise InvalidArgumentError("grid has non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @classmethod
    def zeros(cls, spec: BevGridSpec, channels: int) -> "FeatureGrid":
        return cls(spec, np.zeros((channels, spec.rows, spec.cols), dtype=np.float32))

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureGrid):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class DepthMap:
    camera: CameraModel
    depth: np.ndarray  # (h', w') meters, 0 = no return
    stride: int = 1


# -- projection ---------------------------------------------------------------


def project_points(cam: CameraModel, pts_ego) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    p = cam.extrinsic.apply(np.atleast_2d(np.asarray(pts_ego, dtype=np.float64)))
    z = p[:, 2]
    in_front = z > 1e-6
    safe = np.where(in_front, z, 1.0)
    u = cam.fx * p[:, 0] / safe + cam.cx
    v = cam.fy * p[:, 1] / safe + cam.cy
    valid = in_front & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return u, v, z, valid


def project_point(cam: CameraModel, p_ego) -> tuple[float, float, float, bool]:
    u, v, z, valid = project_points(cam, np.asarray(p_ego, dtype=np.float64).reshape(1, 3))
    return float(u[0]), float(v[0]), float(z[0]), bool(valid[0])


def unproject(cam: CameraModel, u, v, depth) -> np.ndarray:
    """Ego-frame points at pixel ``(u, v)`` and optical depth ``depth`` (broadcast)."""
    u, v, d = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float), np.asarray(depth, float))
    cam_pts = np.stack([(u - cam.cx) / cam.fx * d, (v - cam.cy) / cam.fy * d, d], axis=-1)
    return cam.extrinsic.inverse().apply(cam_pts.reshape(-1, 3)).reshape(cam_pts.shape)


def lidar_to_depthmap(cam: CameraModel, cloud, stride: int = 1) -> DepthMap:
    """Z-buffer a point cloud into a strided depth image; empty cells are 0."""
    if stride < 1:
        raise InvalidArgumentError("stride must be >= 1")
    h, w = -(-cam.height // stride), -(-cam.width // stride)
    depth = np.zeros((h, w), dtype=np.float32)
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(cloud):
        u, v, z, valid = project_points(cam, cloud)
        r = (v[valid] // stride).astype(np.int64)
        c = (u[valid] // stride).astype(np.int64)
        flat = r * w + c
        best = np.full(h * w, np.inf)
        np.minimum.at(best, flat, z[valid])
        hit = np.isfinite(best)
        depth.reshape(-1)[hit] = best[hit]
    return DepthMap(cam, depth, stride)


def depth_to_bins(depth, bins: DepthBins):
    """Categorical bin index of ``depth`` and whether it lies in ``[d_min, d_max)``.

    Scalars give ``(int, bool)``; arrays give arrays.
    """
    d = np.asarray(depth, dtype=np.float64)
    idx = np.floor((d - bins.d_min) / bins.bin_width).astype(np.int64)
    valid = (d >= bins.d_min) & (d < bins.d_max) & (idx < bins.count)
    if d.ndim == 0:
        return int(idx), bool(valid)
    return idx, valid


# -- forward / backward -------------------------------------------------------


def _feature_pixel_centers(cam: CameraModel, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    sv, su = cam.feature_stride(h, w)
    u = (np.arange(w) + 0.5) * su
    v = (np.arange(h) + 0.5) * sv
    return np.meshgrid(u, v)


def forward_splat(cam_features: Sequence[np.ndarray], depth_dist: Sequence[np.ndarray], cams: Sequence[CameraModel],
                  spec: BevGridSpec, bins: DepthBins) -> FeatureGrid:
    """Lift every (pixel, depth bin) to 3D and scatter ``weight * feature`` into its BEV cell.

    Accumulation is a float64 bincount per channel, so the result does not
    depend on thread scheduling.
    """
    if not (len(cam_features) == len(depth_dist) == len(cams)) or not cams:
        raise InvalidArgumentError("need matching, non-empty feature/depth/camera lists")
    n_ch = np.asarray(cam_features[0]).shape[0]
    acc = np.zeros((n_ch, spec.rows * spec.cols))
    centers = bins.centers()
    for feat, dist, cam in zip(cam_features, depth_dist, cams):
        feat = np.asarray(feat, dtype=np.float64)
        dist = np.asarray(dist, dtype=np.float64)
        if feat.ndim != 3 or feat.shape[0] != n_ch:
            raise InvalidArgumentError(f"camera features must be (C, h, w) with C={n_ch}")
        if dist.shape != (bins.count,) + feat.shape[1:]:
            raise InvalidArgumentError(f"depth distribution {dist.shape} != ({bins.count}, h, w)")
        h, w = feat.shape[1:]
        u, v = _feature_pixel_centers(cam, h, w)
        pts = unproject(cam, u[None], v[None], centers[:, None, None])  # (D, h, w, 3)
        r, c, inside = spec.cell_of(pts[..., 0], pts[..., 1])
        sel = inside & (dist != 0)
        cell = (r * spec.cols + c)[sel]
        wgt = dist[sel]
        pix = np.broadcast_to(np.arange(h * w).reshape(1, h, w), dist.shape)[sel]
        flat_feat = feat.reshape(n_ch, -1)
        for ch in range(n_ch):
            acc[ch] += np.bincount(cell, weights=wgt * flat_feat[ch, pix], minlength=acc.shape[1])
    return FeatureGrid(spec, acc.reshape(n_ch, spec.rows, spec.cols).astype(np.float32))


def bilinear_sample(img: np.ndarray, fr: np.ndarray, fc: np.ndarray) -> np.ndarray:
    """Sample ``img`` (C, H, W) at fractional indices, clamping to the border."""
    _, h, w = img.shape
    fr = np.clip(fr, 0.0, h - 1)
    fc = np.clip(fc, 0.0, w - 1)
    r0 = np.floor(fr).astype(np.int64)
    c0 = np.floor(fc).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    ar = fr - r0
    ac = fc - c0
    img = img.astype(np.float64, copy=False)
    return (
        img[:, r0, c0] * (1 - ar) * (1 - ac)
        + img[:, r0, c1] * (1 - ar) * ac
        + img[:, r1, c0] * ar * (1 - ac)
        + img[:, r1, c1] * ar * ac
    )


def backward_sample(image_features: Sequence[np.ndarray], cams: Sequence[CameraModel], spec: BevGridSpec,
                    heights: Sequence[float] = (-1.0, 0.0, 1.0, 2.0)) -> tuple[FeatureGrid, np.ndarray]:
    """Project cell-centre reference points into each camera and average the valid samples.

    Returns the grid and a per-cell count of valid samples. Cells with no
    valid sample are zero.
    """
    if not heights:
        raise InvalidArgumentError("need at least one reference height")
    if len(image_features) != len(cams):
        raise InvalidArgumentError("feature and camera lists differ in length")
    n_ch = np.asarray(image_features[0]).shape[0]
    xs, ys = spec.cell_centers()
    n_cells = xs.size
    acc = np.zeros((n_ch, n_cells))
    hits = np.zeros(n_cells, dtype=np.int64)
    for feat, cam in zip(image_features, cams):
        feat = np.asarray(feat)
        if feat.ndim != 3 or feat.shape[0] != n_ch:
            raise InvalidArgumentError(f"camera features must be (C, h, w) with C={n_ch}")
        h, w = feat.shape[1:]
        sv, su = cam.feature_stride(h, w)
        for z in heights:
            pts = np.stack([xs.ravel(), ys.ravel(), np.full(n_cells, float(z))], axis=1)
            u, v, _, valid = project_points(cam, pts)
            if not valid.any():
                continue
            vals = bilinear_sample(feat, v[valid] / sv - 0.5, u[valid] / su - 0.5)
            acc[:, valid] += vals
            hits[valid] += 1
    out = np.where(hits > 0, acc / np.maximum(hits, 1), 0.0)
    return (
        FeatureGrid(spec, out.reshape(n_ch, spec.rows, spec.cols).astype(np.float32)),
        hits.reshape(spec.rows, spec.cols),
    )


# -- SD map + fusion ----------------------------------------------------------


def sinusoidal_embed(xy, embed_dim: int, temperature: float = 10000.0) -> np.ndarray:
    """Half the dimensions encode x and half y, each as interleaved sin/cos pairs.

    Frequencies are ``temperature ** (-j / n)`` for ``j = 0..n-1``: the first
    pair is the fastest (1 rad/m) and later pairs are geometrically slower.
    """
    if embed_dim < 2 or embed_dim % 2:
        raise InvalidArgumentError("embedding dimension must be a positive even number")
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))[:, :2]
    half = embed_dim // 2
    n_freq = (half + 1) // 2
    freqs = temperature ** (-np.arange(n_freq) / n_freq)
    out = np.empty((len(xy), embed_dim))
    for axis in range(2):
        ang = xy[:, axis : axis + 1] * freqs[None, :]
        pairs = np.stack([np.sin(ang), np.cos(ang)], axis=-1).reshape(len(xy), -1)
        out[:, axis * half : (axis + 1) * half] = pairs[:, :half]
    return out


def encode_sd_map(polylines: Sequence[Polyline], points_per_line: int, embed_dim: int,
                  temperature: float = 10000.0) -> np.ndarray:
    if points_per_line < 2:
        raise InvalidArgumentError("points_per_line must be >= 2")
    if embed_dim < 2 or embed_dim % 2:
        raise InvalidArgumentError("embedding dimension must be a positive even number")
    if not polylines:
        return np.zeros((0, embed_dim), dtype=np.float32)
    pts = np.concatenate([resample_uniform(p, points_per_line).points for p in polylines])
    return sinusoidal_embed(pts, embed_dim, temperature).astype(np.float32)


def sd_cross_attend(bev: FeatureGrid, sd_tokens, w_q, w_k, w_v) -> FeatureGrid:
    """BEV cells attend over SD-map tokens; the result is added back to the grid."""
    c = bev.channels
    w_q, w_k, w_v = np.asarray(w_q), np.asarray(w_k), np.asarray(w_v)
    tokens = np.asarray(sd_tokens)
    if w_q.shape[0] != c or w_v.shape[1] != c or w_k.shape[0] != tokens.shape[1] or w_v.shape[0] != tokens.shape[1]:
        raise InvalidArgumentError("projection shapes do not chain with grid channels / token width")
    if w_q.shape[1] != w_k.shape[1]:
        raise InvalidArgumentError("query and key projections must share their output width")
    if len(tokens) == 0:
        return bev
    queries = bev.data.reshape(c, -1).T.astype(np.float64)
    out = attention(queries @ w_q, tokens @ w_k, tokens @ w_v)
    fused = bev.data.astype(np.float64) + out.T.reshape(bev.data.shape)
    return FeatureGrid(bev.spec, fused.astype(np.float32))


def channel_fuse(a: FeatureGrid, b: FeatureGrid, fusion_params: MlpParams) -> FeatureGrid:
    """Per-channel gate ``w = σ(MLP(pool([a; b])))``, output ``w·a + (1−w)·b``."""
    if a.spec != b.spec or a.data.shape != b.data.shape:
        raise InvalidArgumentError("fusion inputs must share grid spec and channel count")
    pooled = np.concatenate([a.data, b.data]).astype(np.float64).mean(axis=(1, 2))
    logits, _ = mlp_forward(fusion_params, pooled[None, :])
    w = sigmoid(logits[0])
    if w.shape != (a.channels,):
        raise InvalidArgumentError(f"fusion MLP must output {a.channels} gates, got {w.shape}")
    out = w[:, None, None] * a.data + (1.0 - w[:, None, None]) * b.data
    return FeatureGrid(a.spec, out.astype(np.float32))


def default_fusion_params(channels: int, rng: np.random.Generator, hidden: int | None = None) -> MlpParams:
    return MlpParams.init([2 * channels, hidden or channels, channels], rng)


def symmetric_view_transform(cam_features, depth_dist, cams, spec: BevGridSpec, bins: DepthBins,
                             fusion_params: MlpParams, heights=(-1.0, 0.0, 1.0, 2.0),
                             sd_tokens=None, sd_proj=None) -> FeatureGrid:
    """Forward splat + backward sample (optionally SD-attended), merged by the channel gate."""
    fwd = forward_splat(cam_features, depth_dist, cams, spec, bins)
    bwd, _ = backward_sample(cam_features, cams, spec, heights)
    if sd_tokens is not None and sd_proj is not None:
        bwd = sd_cross_attend(bwd, sd_tokens, *sd_proj)
    return channel_fuse(fwd, bwd, fusion_params)
