"""Vectorized map elements and their canonical point forms.

Ped crossings are reduced to four corners and re-expanded to 20 points, five
per edge, with the corners at indices 0, 5, 10 and 15. That form has only eight
equivalent orderings (four start corners times two directions). Open
elements are resampled to a fixed count and have two orderings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from .errors import DegenerateGeometryError, InvalidArgumentError
from .geom import Polyline, resample_uniform, signed_area_xy

PED_POINTS = 20
PED_EDGE_SAMPLES = 6
PED_CORNERS = (0, 5, 10, 15)
DEFAULT_OPEN_POINTS = 10
_AREA_EPS = 1e-9


class MapClass(str, enum.Enum):
    PED_CROSSING = "ped_crossing"
    DIVIDER = "divider"
    BOUNDARY = "boundary"
    LANE_SEGMENT = "lane_segment"
    ROAD_BOUNDARY_AREA = "road_boundary_area"

    @property
    def closed(self) -> bool:
        return self is MapClass.PED_CROSSING

    @property
    def index(self) -> int:
        return list(MapClass).index(self)


class BoundaryAttr(str, enum.Enum):
    NONE = "none"
    DASHED = "dashed"
    SOLID = "solid"


@dataclass(frozen=True)
class LaneSegment:
    centerline: Polyline
    left_offset: np.ndarray
    right_offset: np.ndarray
    left_attr: BoundaryAttr = BoundaryAttr.NONE
    right_attr: BoundaryAttr = BoundaryAttr.NONE

    def __post_init__(self):
        n = len(self.centerline)
        for name in ("left_offset", "right_offset"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=np.float64), (n,)).copy()
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise InvalidArgumentError(f"{name} must be finite and >= 0")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "left_attr", BoundaryAttr(self.left_attr))
        object.__setattr__(self, "right_attr", BoundaryAttr(self.right_attr))


@dataclass(frozen=True, eq=False)
class MapInstance:
    """One vectorized map element.

    Lane segments may carry per-point boundary offsets and the two boundary
    attributes; other classes leave those fields empty.
    """

    cls: MapClass
    geometry: Polyline
    score: float = 1.0
    corner_indices: Optional[tuple[int, ...]] = None
    left_offset: Optional[np.ndarray] = None
    right_offset: Optional[np.ndarray] = None
    left_attr: BoundaryAttr = BoundaryAttr.NONE
    right_attr: BoundaryAttr = BoundaryAttr.NONE
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        cls = MapClass(self.cls)
        object.__setattr__(self, "cls", cls)
        if not 0.0 <= float(self.score) <= 1.0:
            raise InvalidArgumentError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "score", float(self.score))
        if self.geometry.closed != cls.closed:
            raise InvalidArgumentError(f"{cls.value} must be {'closed' if cls.closed else 'open'}")
        if cls is MapClass.PED_CROSSING:
            # raw outlines (any vertex count, no corners) are allowed until canonicalized
            if self.corner_indices is not None:
                if len(self.geometry) != PED_POINTS or tuple(self.corner_indices) != PED_CORNERS:
                    raise InvalidArgumentError("canonical ped crossing has 20 points, corners at 0, 5, 10, 15")
            elif len(self.geometry) < 3:
                raise InvalidArgumentError("ped crossing outline needs at least 3 vertices")
        elif self.corner_indices is not None:
            raise InvalidArgumentError("corner indices only apply to ped crossings")
        if self.corner_indices is not None:
            object.__setattr__(self, "corner_indices", tuple(int(i) for i in self.corner_indices))
        n = len(self.geometry)
        for name in ("left_offset", "right_offset"):
            v = getattr(self, name)
            if v is None:
                continue
            if cls is not MapClass.LANE_SEGMENT:
                raise InvalidArgumentError("offsets only apply to lane segments")
            v = np.broadcast_to(np.asarray(v, dtype=np.float64), (n,)).copy()
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise InvalidArgumentError(f"{name} must be finite and >= 0")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "left_attr", BoundaryAttr(self.left_attr))
        object.__setattr__(self, "right_attr", BoundaryAttr(self.right_attr))

    @property
    def is_canonical_ped(self) -> bool:
        return self.cls is MapClass.PED_CROSSING and self.corner_indices == PED_CORNERS

    @property
    def points(self) -> np.ndarray:
        return self.geometry.points

    def with_geometry(self, geometry: Polyline, **changes) -> "MapInstance":
        kw = dict(
            cls=self.cls,
            geometry=geometry,
            score=self.score,
            corner_indices=self.corner_indices,
            left_offset=self.left_offset,
            right_offset=self.right_offset,
            left_attr=self.left_attr,
            right_attr=self.right_attr,
            extra=dict(self.extra),
        )
        kw.update(changes)
        return MapInstance(**kw)

    def with_score(self, score: float) -> "MapInstance":
        return self.with_geometry(self.geometry, score=score)

    def as_lane_segment(self) -> LaneSegment:
        if self.cls is not MapClass.LANE_SEGMENT:
            raise InvalidArgumentError("not a lane segment")
        zeros = np.zeros(len(self.geometry))
        return LaneSegment(
            self.geometry,
            zeros if self.left_offset is None else self.left_offset,
            zeros if self.right_offset is None else self.right_offset,
            self.left_attr,
            self.right_attr,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MapInstance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.cls is other.cls
            and self.geometry == other.geometry
            and self.score == other.score
            and self.corner_indices == other.corner_indices
            and same(self.left_offset, other.left_offset)
            and same(self.right_offset, other.right_offset)
            and self.left_attr is other.left_attr
            and self.right_attr is other.right_attr
        )

    __hash__ = None


# -- corners -----------------------------------------------------------------


def _triangle_areas(xy: np.ndarray) -> np.ndarray:
    prev = np.roll(xy, 1, axis=0)
    nxt = np.roll(xy, -1, axis=0)
    return 0.5 * np.abs(
        (xy[:, 0] - prev[:, 0]) * (nxt[:, 1] - prev[:, 1])
        - (nxt[:, 0] - prev[:, 0]) * (xy[:, 1] - prev[:, 1])
    )


def _visvalingam(points: np.ndarray, keep: int) -> np.ndarray:
    pts = list(points)
    while len(pts) > keep:
        arr = np.asarray(pts)
        areas = _triangle_areas(arr[:, :2])
        del pts[int(np.argmin(areas))]
    return np.asarray(pts)


def min_area_rectangle(points: np.ndarray) -> np.ndarray:
    """Minimum-area bounding rectangle of the XY projection (rotating calipers).

    Corner z is the mean input z.
    """
    xy = points[:, :2]
    try:
        hull = xy[ConvexHull(xy).vertices]
    except (QhullError, ValueError) as exc:
        raise DegenerateGeometryError("points are collinear; no bounding rectangle") from exc
    best = None
    for i in range(len(hull)):
        edge = hull[(i + 1) % len(hull)] - hull[i]
        ux = edge / np.linalg.norm(edge)
        uy = np.array([-ux[1], ux[0]])
        px, py = hull @ ux, hull @ uy
        area = (px.max() - px.min()) * (py.max() - py.min())
        if best is None or area < best[0] - 1e-12:
            best = (area, ux, uy, px.min(), px.max(), py.min(), py.max())
    _, ux, uy, x0, x1, y0, y1 = best
    corners = np.array([x0 * ux + y0 * uy, x1 * ux + y0 * uy, x1 * ux + y1 * uy, x0 * ux + y1 * uy])
    z = np.full((4, 1), points[:, 2].mean())
    return np.concatenate([corners, z], axis=1)


def _canonical_order(corners: np.ndarray) -> np.ndarray:
    if signed_area_xy(corners) < 0:
        corners = corners[::-1]
    start = min(range(len(corners)), key=lambda i: (corners[i, 0], corners[i, 1]))
    return np.roll(corners, -start, axis=0)


def simplify_to_corners(polygon: Polyline) -> np.ndarray:
    """Four corners of a roughly quadrilateral closed polygon, CCW from the lexicographic min.

    Repeatedly drops the vertex spanning the smallest triangle with its
    neighbours. Falls back to the minimum-area rectangle when there are only
    three vertices or the survivors enclose no area.
    """
    if not polygon.closed:
        raise InvalidArgumentError("corner extraction needs a closed polygon")
    pts = polygon.points
    if len(pts) < 3:
        raise InvalidArgumentError("polygon needs at least 3 vertices")
    corners = _visvalingam(pts, 4) if len(pts) >= 4 else None
    if corners is None or abs(signed_area_xy(corners)) <= _AREA_EPS:
        corners = min_area_rectangle(pts)
    return _canonical_order(corners)


def resample_ped_crossing(corners, score: float = 1.0) -> MapInstance:
    """Six evenly spaced samples per edge, endpoints included, shared corners kept once."""
    c = np.asarray(corners, dtype=np.float64)
    if c.shape != (4, 3):
        raise InvalidArgumentError(f"expected 4 corners of shape (4, 3), got {c.shape}")
    if abs(signed_area_xy(c)) <= _AREA_EPS:
        raise DegenerateGeometryError("ped crossing corners enclose zero area")
    t = np.arange(PED_EDGE_SAMPLES - 1) / (PED_EDGE_SAMPLES - 1)
    nxt = np.roll(c, -1, axis=0)
    pts = (c[:, None, :] + t[None, :, None] * (nxt - c)[:, None, :]).reshape(-1, 3)
    return MapInstance(MapClass.PED_CROSSING, Polyline(pts, closed=True), score, PED_CORNERS)


def ped_permutations(inst: MapInstance) -> list[np.ndarray]:
    """The eight corner-anchored orderings: 4 start corners x {forward, reverse}."""
    if not inst.is_canonical_ped:
        raise InvalidArgumentError("corner-wise permutations need a canonical ped crossing")
    n = len(inst.geometry)
    base = np.arange(n)
    perms = []
    for start in inst.corner_indices:
        perms.append((start + base) % n)
        perms.append((start - base) % n)
    return perms


def generic_permutations(inst: MapInstance) -> list[np.ndarray]:
    n = len(inst.geometry)
    return [np.arange(n), np.arange(n)[::-1].copy()]


def equivalent_permutations(inst: MapInstance) -> list[np.ndarray]:
    if inst.cls is MapClass.PED_CROSSING:
        return ped_permutations(inst)
    return generic_permutations(inst)


def canonicalize(inst: MapInstance, open_points: int = DEFAULT_OPEN_POINTS) -> MapInstance:
    """Bring an instance to its canonical point form.

    Ped crossings are always rebuilt from their corners. Open elements that
    already have ``open_points`` points pass through unchanged, so the
    operation is idempotent.
    """
    if inst.cls is MapClass.PED_CROSSING:
        out = resample_ped_crossing(simplify_to_corners(inst.geometry), inst.score)
        return out.with_geometry(out.geometry, extra=dict(inst.extra))
    if len(inst.geometry) == open_points:
        return inst
    geom = resample_uniform(inst.geometry, open_points)
    changes = {}
    if inst.left_offset is not None or inst.right_offset is not None:
        src = _arc_fractions(inst.geometry)
        dst = np.linspace(0.0, 1.0, open_points)
        for name in ("left_offset", "right_offset"):
            v = getattr(inst, name)
            changes[name] = None if v is None else np.interp(dst, src, v)
    return inst.with_geometry(geom, **changes)


def _arc_fractions(p: Polyline) -> np.ndarray:
    d = np.linalg.norm(np.diff(p.points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    return cum / cum[-1] if cum[-1] > 0 else np.linspace(0.0, 1.0, len(cum))


# -- lane segments -----------------------------------------------------------


def _left_normals(points: np.ndarray) -> np.ndarray:
    xy = points[:, :2]
    n = len(xy)
    tangents = np.empty_like(xy)
    tangents[0] = xy[1] - xy[0]
    tangents[-1] = xy[-1] - xy[-2]
    if n > 2:
        tangents[1:-1] = xy[2:] - xy[:-2]
    norms = np.linalg.norm(tangents, axis=1)
    good = norms > 1e-12
    if not good.any():
        raise DegenerateGeometryError("centerline has no direction")
    idx = np.arange(n)
    good_idx = idx[good]
    # zero-length tangent: borrow from the nearest point that has one
    nearest = good_idx[np.abs(idx[:, None] - good_idx[None, :]).argmin(axis=1)]
    t = tangents[nearest] / norms[nearest][:, None]
    return np.stack([-t[:, 1], t[:, 0], np.zeros(n)], axis=1)


def lane_boundaries(seg: LaneSegment) -> tuple[Polyline, Polyline]:
    c = seg.centerline.points
    nrm = _left_normals(c)
    left = c + seg.left_offset[:, None] * nrm
    right = c - seg.right_offset[:, None] * nrm
    return Polyline(left), Polyline(right)
