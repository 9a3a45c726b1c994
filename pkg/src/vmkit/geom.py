"""Polylines, rigid poses and the arc-length arithmetic the rest of the package builds on.

All geometry is float64. Points are plain ``(3,)`` / ``(N, 3)`` numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import InvalidArgumentError

_ORTHO_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("point has non-finite coordinates")
    return arr


@dataclass(frozen=True, eq=False)
class Polyline:
    """Ordered 3D vertices. A closed polyline never repeats its first vertex."""

    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 2 and pts.shape[1] == 2:
            pts = np.concatenate([pts, np.zeros((len(pts), 1))], axis=1)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError(f"polyline points must be (N, 3), got {pts.shape}")
        if len(pts) < 2:
            raise InvalidArgumentError("polyline needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("polyline has non-finite coordinates")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "closed", bool(self.closed))

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polyline):
            return NotImplemented
        return self.closed == other.closed and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash((self.closed, self.points.tobytes()))

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end points of every segment, including the closing one."""
        a = self.points
        b = np.roll(a, -1, axis=0)
        if not self.closed:
            a, b = a[:-1], b[:-1]
        return a, b

    def reversed(self) -> "Polyline":
        return Polyline(self.points[::-1].copy(), self.closed)


@dataclass(frozen=True, eq=False)
class SE3Pose:
    """Rigid transform ``x -> R x + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidArgumentError("pose has non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise InvalidArgumentError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "SE3Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_xy_yaw(cls, x: float, y: float, yaw: float, z: float = 0.0) -> "SE3Pose":
        c, s = math.cos(yaw), math.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_matrix(cls, m) -> "SE3Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def inverse(self) -> "SE3Pose":
        rt = self.rotation.T
        return SE3Pose(rt, -rt @ self.translation)

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        """``self ∘ other``: apply ``other`` first."""
        r = self.rotation @ other.rotation
        # re-orthonormalise so long chains keep passing the 1e-9 check
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
        return SE3Pose(r, self.rotation @ other.translation + self.translation)

    def __matmul__(self, other: "SE3Pose") -> "SE3Pose":
        return self.compose(other)

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_se2(self) -> "SE3Pose":
        """Planar slice: keep yaw and the x/y translation."""
        return SE3Pose.from_xy_yaw(self.translation[0], self.translation[1], self.yaw)

    def allclose(self, other: "SE3Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )


Geometry = Union[Polyline, np.ndarray]


def transform(p: Geometry, pose: SE3Pose) -> Geometry:
    if isinstance(p, Polyline):
        return Polyline(pose.apply(p.points), p.closed)
    return pose.apply(p)


def relative_pose(a: SE3Pose, b: SE3Pose) -> SE3Pose:
    """Pose of ``b`` expressed in the frame of ``a``."""
    return a.inverse().compose(b)


def arc_length(p: Polyline) -> float:
    a, b = p.segments()
    return float(np.linalg.norm(b - a, axis=1).sum())


def cumulative_lengths(p: Polyline) -> np.ndarray:
    """Arc position of every vertex, plus the closing position for closed lines."""
    a, b = p.segments()
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(b - a, axis=1))])


def point_at(p: Polyline, s) -> np.ndarray:
    """Points at arc positions ``s`` (clamped to the polyline)."""
    s = np.atleast_1d(np.asarray(s, dtype=np.float64))
    cum = cumulative_lengths(p)
    verts = np.concatenate([p.points, p.points[:1]]) if p.closed else p.points
    total = cum[-1]
    if total <= 0.0:
        return np.repeat(p.points[:1], len(s), axis=0)
    s = np.clip(s, 0.0, total)
    idx = np.searchsorted(cum, s, side="right") - 1
    idx = np.clip(idx, 0, len(cum) - 2)
    seg_len = cum[idx + 1] - cum[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(seg_len > 0, (s - cum[idx]) / seg_len, 0.0)
    return verts[idx] + frac[:, None] * (verts[idx + 1] - verts[idx])


def resample_uniform(p: Polyline, k: int) -> Polyline:
    """``k`` points at equal arc-length fractions.

    Open lines keep both endpoints exactly. Closed lines start at vertex 0 and
    space samples by ``perimeter / k``.
    """
    if k < 2:
        raise InvalidArgumentError(f"resample count must be >= 2, got {k}")
    total = arc_length(p)
    if total <= 0.0:
        pts = np.repeat(p.points[:1], k, axis=0)
        if not p.closed:
            # lengths can underflow to 0 while the endpoints still differ
            pts[-1] = p.points[-1]
        return Polyline(pts, p.closed)
    if p.closed:
        s = np.arange(k) * (total / k)
    else:
        s = np.linspace(0.0, total, k)
    pts = point_at(p, s)
    pts[0] = p.points[0]
    if not p.closed:
        pts[-1] = p.points[-1]
    return Polyline(pts, p.closed)


def signed_area_xy(points: np.ndarray) -> float:
    """Shoelace area of the XY projection; positive for counter-clockwise."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))
