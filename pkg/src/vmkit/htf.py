"""Hierarchical temporal fusion of BEV grids.

A convGRU carries a hidden state from frame to frame (streaming). A second
level either stacks another convGRU on top, or concatenates a few selected
past hidden states with the current one and projects back (stacking). Past
frames are warped into the current ego frame with the planar part of the
relative pose.

Stacking picks frames differently per phase: training draws ``n`` at random
from the latest ``m`` buffered frames; testing picks the frames closest to
fixed travelled-distance strides.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .geom import SE3Pose, relative_pose
from .nnkern import sigmoid
from .svt import FeatureGrid, bilinear_sample


class FusionMode(str, enum.Enum):
    NONE = "none"
    STREAMING = "streaming"
    STREAMING_STREAMING = "streaming_streaming"
    STREAMING_STACKING = "streaming_stacking"


@dataclass(frozen=True)
class StackingConfig:
    n: int = 4
    m: int = 10
    test_strides: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    phase: str = "test"

    def __post_init__(self):
        if not 1 <= self.n <= self.m:
            raise InvalidArgumentError("stacking needs 1 <= n <= m")
        s = tuple(float(v) for v in self.test_strides)
        if not s or any(v <= 0 for v in s) or any(b <= a for a, b in zip(s, s[1:])):
            raise InvalidArgumentError("strides must be positive and ascending")
        if len(s) > self.n:
            raise InvalidArgumentError("more test strides than stacking slots")
        if self.phase not in ("train", "test"):
            raise InvalidArgumentError("phase must be 'train' or 'test'")
        object.__setattr__(self, "test_strides", s)


@dataclass
class BufferEntry:
    frame_id: int
    pose: SE3Pose
    hidden: FeatureGrid


class FrameBuffer:
    """Ring buffer of past frames, oldest first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidArgumentError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[BufferEntry] = deque(maxlen=capacity)

    def push(self, frame_id: int, pose: SE3Pose, hidden: FeatureGrid) -> None:
        if self._items and frame_id <= self._items[-1].frame_id:
            raise InvalidArgumentError("frame ids must increase")
        self._items.append(BufferEntry(frame_id, pose, hidden))

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def entries(self) -> list[BufferEntry]:
        return list(self._items)

    def get(self, frame_id: int) -> BufferEntry:
        for e in self._items:
            if e.frame_id == frame_id:
                return e
        raise KeyError(frame_id)


# -- warping ------------------------------------------------------------------


def warp_grid(src: FeatureGrid, src_pose: SE3Pose, dst_pose: SE3Pose) -> tuple[FeatureGrid, np.ndarray]:
    """Resample ``src`` (captured at ``src_pose``) into the ego frame of ``dst_pose``.

    Only yaw and x/y translation are used. Destination cells whose source
    location falls outside the source cell centres get 0 and mask 0.
    """
    spec = src.spec
    rel = relative_pose(src_pose.to_se2(), dst_pose.to_se2())
    xs, ys = spec.cell_centers()
    c, s = rel.rotation[0, 0], rel.rotation[1, 0]
    sx = c * xs - s * ys + rel.translation[0]
    sy = s * xs + c * ys + rel.translation[1]
    fr, fc = spec.continuous_index(sx, sy)
    tol = 1e-9
    valid = (fr >= -tol) & (fr <= spec.rows - 1 + tol) & (fc >= -tol) & (fc <= spec.cols - 1 + tol)
    out = np.zeros(src.data.shape, dtype=np.float64)
    if valid.any():
        out[:, valid] = bilinear_sample(src.data, fr[valid], fc[valid])
    return FeatureGrid(spec, out.astype(np.float32)), valid


# -- convGRU ------------------------------------------------------------------


@dataclass
class ConvGruParams:
    """Gate kernels shaped ``(C, 2C, k, k)`` over ``[h; x]`` plus per-channel biases."""

    w_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    b_h: np.ndarray

    def __post_init__(self):
        c = self.b_z.shape[0]
        k = self.w_z.shape[-1]
        for w, b in ((self.w_z, self.b_z), (self.w_r, self.b_r), (self.w_h, self.b_h)):
            if w.shape != (c, 2 * c, k, k) or b.shape != (c,) or k % 2 == 0:
                raise InvalidArgumentError("convGRU kernels must be (C, 2C, k, k) with odd k and (C,) biases")

    @property
    def channels(self) -> int:
        return self.b_z.shape[0]

    @classmethod
    def zeros(cls, channels: int, kernel: int = 3) -> "ConvGruParams":
        w = np.zeros((channels, 2 * channels, kernel, kernel))
        b = np.zeros(channels)
        return cls(w.copy(), b.copy(), w.copy(), b.copy(), w.copy(), b.copy())

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, kernel: int = 3, scale: float = 0.1) -> "ConvGruParams":
        shape = (channels, 2 * channels, kernel, kernel)
        return cls(
            rng.normal(scale=scale, size=shape), np.zeros(channels),
            rng.normal(scale=scale, size=shape), np.zeros(channels),
            rng.normal(scale=scale, size=shape), np.zeros(channels),
        )

    def tensors(self) -> list[np.ndarray]:
        return [self.w_z, self.b_z, self.w_r, self.b_r, self.w_h, self.b_h]


def conv2d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded 'same' cross-correlation. ``x`` (Cin, H, W), ``w`` (Cout, Cin, k, k)."""
    _, h, wd = x.shape
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x.astype(np.float64), ((0, 0), (p, p), (p, p)))
    out = np.zeros((w.shape[0], h, wd)) + b[:, None, None]
    for dy in range(k):
        for dx in range(k):
            out += np.einsum("oc,chw->ohw", w[:, :, dy, dx], xp[:, dy : dy + h, dx : dx + wd])
    return out


def conv_gru_step(params: ConvGruParams, h: FeatureGrid, x: FeatureGrid) -> FeatureGrid:
    if h.spec != x.spec or h.data.shape != x.data.shape or h.channels != params.channels:
        raise InvalidArgumentError("hidden/input grids must share spec and channel count with the GRU")
    hd = h.data.astype(np.float64)
    xd = x.data.astype(np.float64)
    hx = np.concatenate([hd, xd])
    z = sigmoid(conv2d_same(hx, params.w_z, params.b_z))
    r = sigmoid(conv2d_same(hx, params.w_r, params.b_r))
    cand = np.tanh(conv2d_same(np.concatenate([r * hd, xd]), params.w_h, params.b_h))
    out = (1.0 - z) * hd + z * cand
    return FeatureGrid(h.spec, out.astype(np.float32))


# -- frame selection ----------------------------------------------------------


def select_frames_training(buffer: FrameBuffer, n: int, m: int, rng) -> list[int]:
    """``min(n, available)`` distinct frames drawn uniformly from the latest ``m``; ids ascending."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    recent = buffer.entries()[-m:]
    if not recent:
        return []
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    pick = rng.choice(len(recent), size=min(n, len(recent)), replace=False)
    return sorted(recent[i].frame_id for i in pick)


def travelled_distances(buffer: FrameBuffer, cur_pose: SE3Pose) -> list[tuple[int, float]]:
    """Along-trajectory distance back from the current pose to each buffered frame, newest first."""
    out = []
    dist = 0.0
    prev = cur_pose.translation
    for e in reversed(buffer.entries()):
        dist += float(np.linalg.norm(e.pose.translation[:2] - prev[:2]))
        prev = e.pose.translation
        out.append((e.frame_id, dist))
    return out


def select_frames_testing(buffer: FrameBuffer, cur_pose: SE3Pose, strides: Sequence[float]) -> list[int]:
    """For each stride, the buffered frame whose travelled distance is closest.

    Ties go to the older frame. Repeated picks are kept once, in stride order.
    """
    if not strides:
        raise InvalidArgumentError("need at least one stride")
    dists = travelled_distances(buffer, cur_pose)
    picked: list[int] = []
    for s in strides:
        best = None
        for fid, d in dists:  # newest first, so '<=' lets older frames win ties
            err = abs(d - s)
            if best is None or err <= best[0]:
                best = (err, fid)
        if best is not None and best[1] not in picked:
            picked.append(best[1])
    return picked


# -- stacking -----------------------------------------------------------------


@dataclass
class StackParams:
    """Per-cell linear map from ``(n_slots + 1) * C`` stacked channels back to ``C``.

    Input channel order is ``[current; slot_1; ...; slot_n]``.
    """

    weight: np.ndarray  # (C, (n_slots + 1) * C)
    bias: np.ndarray  # (C,)
    n_slots: int

    def __post_init__(self):
        c = self.bias.shape[0]
        if self.weight.shape != (c, (self.n_slots + 1) * c):
            raise InvalidArgumentError("stack weight must be (C, (n_slots + 1) * C)")

    @classmethod
    def passthrough(cls, channels: int, n_slots: int) -> "StackParams":
        w = np.zeros((channels, (n_slots + 1) * channels))
        w[:, :channels] = np.eye(channels)
        return cls(w, np.zeros(channels), n_slots)

    @classmethod
    def average(cls, channels: int, n_slots: int) -> "StackParams":
        w = np.tile(np.eye(channels), (1, n_slots + 1)) / (n_slots + 1)
        return cls(w, np.zeros(channels), n_slots)

    def tensors(self) -> list[np.ndarray]:
        return [self.weight, self.bias]


def fuse_stack(current: FeatureGrid, selected: Sequence[tuple[SE3Pose, FeatureGrid]], cur_pose: SE3Pose,
               stack_params: StackParams) -> FeatureGrid:
    if len(selected) > stack_params.n_slots:
        raise InvalidArgumentError(f"{len(selected)} frames selected for {stack_params.n_slots} slots")
    c = current.channels
    if stack_params.bias.shape[0] != c:
        raise InvalidArgumentError("stack params do not match grid channels")
    slots = [current.data.astype(np.float64)]
    for pose, grid in selected:
        if grid.spec != current.spec or grid.channels != c:
            raise InvalidArgumentError("stacked grid spec/channel mismatch")
        slots.append(warp_grid(grid, pose, cur_pose)[0].data.astype(np.float64))
    while len(slots) < stack_params.n_slots + 1:
        slots.append(np.zeros_like(slots[0]))
    stacked = np.concatenate(slots)
    out = np.einsum("oc,chw->ohw", stack_params.weight, stacked) + stack_params.bias[:, None, None]
    return FeatureGrid(current.spec, out.astype(np.float32))


# -- sequences ----------------------------------------------------------------


@dataclass
class Frame:
    frame_id: int
    pose: SE3Pose
    grid: FeatureGrid


@dataclass
class HtfParams:
    gru: Optional[ConvGruParams] = None
    gru2: Optional[ConvGruParams] = None
    stack: Optional[StackParams] = None
    stacking: StackingConfig = field(default_factory=StackingConfig)
    buffer_capacity: int = 64
    seed: int = 0


@dataclass
class SequenceResult:
    outputs: list[FeatureGrid]
    selections: list[dict]  # one record per frame: frame_id, selected ids, their travelled distances


def _stream(gru: ConvGruParams, hidden: Optional[tuple[SE3Pose, FeatureGrid]], frame_pose, x: FeatureGrid):
    if hidden is None:
        return x
    warped, _ = warp_grid(hidden[1], hidden[0], frame_pose)
    return conv_gru_step(gru, warped, x)


def run_sequence(mode: FusionMode, frames: Sequence[Frame], params: HtfParams) -> SequenceResult:
    mode = FusionMode(mode)
    ids = [f.frame_id for f in frames]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise InvalidArgumentError("frames must be in strictly increasing frame_id order")
    needs_gru = mode is not FusionMode.NONE
    if needs_gru and params.gru is None:
        raise InvalidArgumentError(f"{mode.value} mode needs convGRU parameters")
    if mode is FusionMode.STREAMING_STREAMING and params.gru2 is None:
        raise InvalidArgumentError("streaming_streaming needs a second convGRU")
    if mode is FusionMode.STREAMING_STACKING and params.stack is None:
        raise InvalidArgumentError("streaming_stacking needs stacking parameters")

    rng = np.random.default_rng(params.seed)
    buffer = FrameBuffer(params.buffer_capacity)
    h1 = h2 = None
    outputs, log = [], []
    for f in frames:
        record = {"frame_id": f.frame_id, "selected": [], "distances": []}
        if mode is FusionMode.NONE:
            out = f.grid
        else:
            s1 = _stream(params.gru, h1, f.pose, f.grid)
            h1 = (f.pose, s1)
            out = s1
            if mode is FusionMode.STREAMING_STREAMING:
                s2 = _stream(params.gru2, h2, f.pose, s1)
                h2 = (f.pose, s2)
                out = s2
            elif mode is FusionMode.STREAMING_STACKING:
                cfg = params.stacking
                if cfg.phase == "train":
                    chosen = select_frames_training(buffer, cfg.n, cfg.m, rng)
                else:
                    chosen = select_frames_testing(buffer, f.pose, cfg.test_strides)
                dist_of = dict(travelled_distances(buffer, f.pose))
                record["selected"] = list(chosen)
                record["distances"] = [dist_of[i] for i in chosen]
                entries = [buffer.get(i) for i in chosen]
                # with no history yet there is nothing to stack
                if entries:
                    out = fuse_stack(s1, [(e.pose, e.hidden) for e in entries], f.pose, params.stack)
                buffer.push(f.frame_id, f.pose, s1)
        outputs.append(out)
        log.append(record)
    return SequenceResult(outputs, log)
