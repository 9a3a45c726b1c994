"""Synthetic scenes, sequences and topology datasets with exact ground truth.

A scene is a straight multi-lane road along world x with optional crossing
roads. Lanes are cut into lane segments at section breaks and junction edges,
and consecutive segments of the same lane are successors. Ped crossings sit on
every junction approach; traffic-light posts stand before each junction and
govern the lanes that enter it. Heights come from a gentle smooth field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .elements import DEFAULT_OPEN_POINTS, BoundaryAttr, MapClass, MapInstance, canonicalize
from .errors import DegenerateGeometryError, InvalidArgumentError
from .geom import Polyline, SE3Pose, arc_length, signed_area_xy
from .svt import CameraModel, project_points
from .topo import DEFAULT_IMAGE_SIZE, TE_CATEGORIES, MapFrame, TopologyGraph, TopoSample, TrafficElement

MIN_FRAGMENT_M = 1.0
MIN_PED_AREA_M2 = 0.5


@dataclass(frozen=True)
class SceneConfig:
    n_lanes: int = 2
    intersections: int = 1
    length: float = 200.0
    section_length: float = 50.0
    lane_width: float = 3.5
    cross_lanes: int = 2
    cross_length: float = 30.0
    height_amplitude: float = 0.3
    sample_spacing: float = 1.0

    def __post_init__(self):
        if self.n_lanes < 1 or self.intersections < 0 or self.cross_lanes < 1:
            raise InvalidArgumentError("need n_lanes >= 1, cross_lanes >= 1, intersections >= 0")
        if self.length <= 0 or self.section_length <= 0 or self.lane_width <= 0 or self.sample_spacing <= 0:
            raise InvalidArgumentError("lengths must be positive")
        junction = self.cross_lanes * self.lane_width
        if self.intersections and self.length / (self.intersections + 1) < junction + 20.0:
            raise InvalidArgumentError("intersections do not fit along the road")
        if self.intersections and self.cross_length <= self.n_lanes * self.lane_width / 2 + 5.0:
            raise InvalidArgumentError("crossing roads must extend past the main road")


@dataclass(frozen=True)
class TeAnchor:
    """A traffic-light post: box centre in world coordinates plus its face size."""

    position: tuple[float, float, float]
    category: int
    size: tuple[float, float] = (0.5, 1.2)  # width across the road, height


@dataclass
class Scene:
    instances: list[MapInstance]
    topology: TopologyGraph  # over lane-segment instances x anchors
    te_anchors: list[TeAnchor]
    seed: int
    config: SceneConfig

    def lane_indices(self) -> list[int]:
        return [i for i, inst in enumerate(self.instances) if inst.cls is MapClass.LANE_SEGMENT]

    def as_frame(self) -> MapFrame:
        return MapFrame(self.instances, [], TopologyGraph(self.topology.ll_scores,
                                                          np.zeros((len(self.lane_indices()), 0))))


def _height_field(seed: int, amplitude: float):
    rng = np.random.default_rng([seed, 7])
    ph = rng.uniform(0, 2 * math.pi, size=2)

    def h(x, y):
        return amplitude * (np.sin(np.asarray(x) / 40.0 + ph[0]) + 0.5 * np.cos(np.asarray(y) / 30.0 + ph[1]))

    return h


def _sampled(a, b, spacing: float, height) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(2, int(math.ceil(np.linalg.norm(b - a) / spacing)) + 1)
    t = np.linspace(0.0, 1.0, n)[:, None]
    xy = a + t * (b - a)
    return np.column_stack([xy, height(xy[:, 0], xy[:, 1])])


def _cuts(lo: float, hi: float, fixed: Sequence[float], blocked: Sequence[tuple[float, float]], step: float):
    """Breakpoints from ``lo`` to ``hi``: every ``step``, plus ``fixed``, minus any inside ``blocked``."""
    pts = set([lo, hi] + [float(v) for v in fixed])
    v = lo + step
    while v < hi - 1e-9:
        if all(not (a - 2.0 < v < b + 2.0) for a, b in blocked):
            pts.add(round(v, 9))
        v += step
    return sorted(pts)


def gen_scene(seed: int, config: SceneConfig = SceneConfig()) -> Scene:
    rng = np.random.default_rng(seed)
    c = config
    h = _height_field(seed, c.height_amplitude)
    half_l = c.length / 2
    road_half = c.n_lanes * c.lane_width / 2
    junction_half = c.cross_lanes * c.lane_width / 2
    spacing = c.length / (c.intersections + 1)
    centres = [-half_l + (k + 1) * spacing + float(rng.uniform(-5.0, 5.0)) for k in range(c.intersections)]
    junctions = [(xc - junction_half, xc + junction_half) for xc in centres]

    instances: list[MapInstance] = []
    lane_rows: list[tuple[str, int, int]] = []  # (road id, lane index, order along lane) per lane segment
    lt_rows: list[list[int]] = []

    def open_inst(cls, pts, **kw):
        instances.append(MapInstance(cls, Polyline(pts), **kw))

    # main road lanes, heading +x
    cuts = _cuts(-half_l, half_l, [v for j in junctions for v in j], junctions, c.section_length)
    for li in range(c.n_lanes):
        y = -road_half + (li + 0.5) * c.lane_width
        left = BoundaryAttr.SOLID if li == c.n_lanes - 1 else BoundaryAttr.DASHED
        right = BoundaryAttr.SOLID if li == 0 else BoundaryAttr.DASHED
        for k, (x0, x1) in enumerate(zip(cuts, cuts[1:])):
            pts = _sampled((x0, y), (x1, y), c.sample_spacing, h)
            open_inst(MapClass.LANE_SEGMENT, pts, left_offset=c.lane_width / 2, right_offset=c.lane_width / 2,
                      left_attr=left, right_attr=right)
            lane_rows.append(("main", li, k))
            lt_rows.append([ji for ji, (a, _) in enumerate(junctions) if abs(x1 - a) < 1e-9])

    # crossing roads, heading +y
    for ji, xc in enumerate(centres):
        ycuts = [-c.cross_length, -road_half, road_half, c.cross_length]
        for li in range(c.cross_lanes):
            x = xc - junction_half + (li + 0.5) * c.lane_width
            for k, (y0, y1) in enumerate(zip(ycuts, ycuts[1:])):
                pts = _sampled((x, y0), (x, y1), c.sample_spacing, h)
                open_inst(MapClass.LANE_SEGMENT, pts, left_offset=c.lane_width / 2, right_offset=c.lane_width / 2,
                          left_attr=BoundaryAttr.SOLID if li == 0 else BoundaryAttr.DASHED,
                          right_attr=BoundaryAttr.SOLID if li == c.cross_lanes - 1 else BoundaryAttr.DASHED)
                lane_rows.append((f"cross{ji}", li, k))
                lt_rows.append([])

    # dividers and road edges along the main road, broken at junctions
    gaps = [-half_l] + [v for j in junctions for v in j] + [half_l]
    spans = list(zip(gaps[0::2], gaps[1::2]))
    for k in range(1, c.n_lanes):
        y = -road_half + k * c.lane_width
        for x0, x1 in spans:
            open_inst(MapClass.DIVIDER, _sampled((x0, y), (x1, y), c.sample_spacing, h))
    for y in (-road_half, road_half):
        for x0, x1 in spans:
            open_inst(MapClass.BOUNDARY, _sampled((x0, y), (x1, y), c.sample_spacing, h))
    for xc in centres:
        for k in range(1, c.cross_lanes):
            x = xc - junction_half + k * c.lane_width
            for y0, y1 in ((-c.cross_length, -road_half), (road_half, c.cross_length)):
                open_inst(MapClass.DIVIDER, _sampled((x, y0), (x, y1), c.sample_spacing, h))
        for x in (xc - junction_half, xc + junction_half):
            for y0, y1 in ((-c.cross_length, -road_half), (road_half, c.cross_length)):
                open_inst(MapClass.BOUNDARY, _sampled((x, y0), (x, y1), c.sample_spacing, h))

    # ped crossings on all four approaches
    for xa, xb in junctions:
        rects = [((xa - 4.0, -road_half), (xa - 1.0, road_half)), ((xb + 1.0, -road_half), (xb + 4.0, road_half)),
                 ((xa, road_half + 1.0), (xb, road_half + 4.0)), ((xa, -road_half - 4.0), (xb, -road_half - 1.0))]
        for (x0, y0), (x1, y1) in rects:
            xy = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            raw = MapInstance(MapClass.PED_CROSSING, Polyline(np.column_stack([xy, h(xy[:, 0], xy[:, 1])]), closed=True))
            instances.append(canonicalize(raw))

    # a traffic light on the far right corner of each junction faces the approaching lanes
    anchors = []
    for _, xb in junctions:
        pos = (xb + 1.5, -road_half - 1.0, float(h(xb + 1.5, -road_half - 1.0)) + 5.0)
        anchors.append(TeAnchor(pos, int(rng.integers(len(TE_CATEGORIES) - 1))))

    n = len(lane_rows)
    ll = np.zeros((n, n))
    index = {row: i for i, row in enumerate(lane_rows)}
    for (road, li, k), i in index.items():
        j = index.get((road, li, k + 1))
        if j is not None:
            ll[i, j] = 1.0
    lt = np.zeros((n, len(anchors)))
    for i, js in enumerate(lt_rows):
        lt[i, js] = 1.0
    # lane segments must come first in index order for the lane-row bookkeeping above
    return Scene(instances, TopologyGraph(ll, lt), anchors, seed, config)


# -- local crops --------------------------------------------------------------


def _clip_segment(a, b, lo, hi) -> Optional[tuple[float, float]]:
    d = b - a
    t0, t1 = 0.0, 1.0
    for ax in range(2):
        for p, q in ((-d[ax], a[ax] - lo[ax]), (d[ax], hi[ax] - a[ax])):
            if p == 0:
                if q < 0:
                    return None
                continue
            t = q / p
            if p < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    return (t0, t1) if t0 < t1 else None


def clip_polyline(points: np.ndarray, lo, hi) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split an open polyline into the pieces inside the XY box ``[lo, hi]``.

    Returns ``(points, fractional source index per point)`` for each piece.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pieces, cur, cur_idx = [], None, None
    for k in range(len(points) - 1):
        a, b = points[k], points[k + 1]
        hit = _clip_segment(a[:2], b[:2], lo, hi)
        if hit is None:
            if cur is not None:
                pieces.append((cur, cur_idx))
                cur = None
            continue
        t0, t1 = hit
        if cur is None or t0 > 0:
            if cur is not None:
                pieces.append((cur, cur_idx))
            cur, cur_idx = [a + t0 * (b - a)], [k + t0]
        end = b if t1 == 1.0 else a + t1 * (b - a)
        cur.append(end)
        cur_idx.append(k + t1)
        if t1 < 1.0:
            pieces.append((cur, cur_idx))
            cur = None
    if cur is not None:
        pieces.append((cur, cur_idx))
    return [(np.array(p), np.array(i)) for p, i in pieces]


def clip_polygon(points: np.ndarray, lo, hi) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon (XY box); z is interpolated along edges."""
    poly = [np.asarray(p, float) for p in points]
    for ax in range(2):
        for bound, keep_le in ((lo[ax], False), (hi[ax], True)):
            if not poly:
                return np.zeros((0, 3))
            out = []
            for i in range(len(poly)):
                cur, nxt = poly[i], poly[(i + 1) % len(poly)]
                cin = cur[ax] <= bound if keep_le else cur[ax] >= bound
                nin = nxt[ax] <= bound if keep_le else nxt[ax] >= bound
                if cin:
                    out.append(cur)
                if cin != nin:
                    t = (bound - cur[ax]) / (nxt[ax] - cur[ax])
                    out.append(cur + t * (nxt - cur))
            poly = out
    return np.array(poly) if poly else np.zeros((0, 3))


@dataclass
class CropResult:
    instances: list[MapInstance]
    source: list[tuple[int, int, int]]  # (scene instance index, piece number, piece count)


def local_crop(scene: Scene, ego_pose: SE3Pose, x_range=(-50.0, 50.0), y_range=(-25.0, 25.0),
               open_points: int = DEFAULT_OPEN_POINTS) -> list[MapInstance]:
    """Scene instances in the ego frame, clipped to the box and canonicalized."""
    return _crop(scene.instances, ego_pose, x_range, y_range, open_points).instances


def _crop(instances, ego_pose, x_range, y_range, open_points) -> CropResult:
    if not (x_range[0] < x_range[1] and y_range[0] < y_range[1]):
        raise InvalidArgumentError("ranges must be (low, high) with low < high")
    lo, hi = (x_range[0], y_range[0]), (x_range[1], y_range[1])
    to_ego = ego_pose.inverse()
    out, source = [], []
    for si, inst in enumerate(instances):
        pts = to_ego.apply(inst.points)
        if inst.geometry.closed:
            poly = clip_polygon(pts, lo, hi)
            if len(poly) < 3 or abs(signed_area_xy(poly)) < MIN_PED_AREA_M2:
                continue
            try:
                out.append(canonicalize(MapInstance(inst.cls, Polyline(poly, closed=True), inst.score)))
            except DegenerateGeometryError:
                continue
            source.append((si, 0, 1))
            continue
        pieces = [(p, idx) for p, idx in clip_polyline(pts, lo, hi) if arc_length(Polyline(p)) >= MIN_FRAGMENT_M]
        for k, (p, idx) in enumerate(pieces):
            kw = {}
            for name in ("left_offset", "right_offset"):
                v = getattr(inst, name)
                if v is not None:
                    kw[name] = np.interp(idx, np.arange(len(v)), v)
            piece = MapInstance(inst.cls, Polyline(p), inst.score, left_attr=inst.left_attr,
                                right_attr=inst.right_attr, **kw)
            out.append(canonicalize(piece, open_points))
            source.append((si, k, len(pieces)))
    return CropResult(out, source)


def project_anchor(anchor: TeAnchor, ego_pose: SE3Pose, cam: CameraModel) -> Optional[tuple[float, float, float, float]]:
    """Pixel box of a traffic-light face, or ``None`` unless all corners are in view."""
    x, y, z = anchor.position
    w, hgt = anchor.size
    corners = np.array([[x, y - w / 2, z - hgt / 2], [x, y + w / 2, z - hgt / 2],
                        [x, y + w / 2, z + hgt / 2], [x, y - w / 2, z + hgt / 2]])
    u, v, _, valid = project_points(cam, ego_pose.inverse().apply(corners))
    if not valid.all():
        return None
    box = (float(u.min()), float(v.min()), float(u.max()), float(v.max()))
    if box[2] - box[0] < 1.0 or box[3] - box[1] < 1.0:
        return None
    return box


def local_map(scene: Scene, ego_pose: SE3Pose, camera: Optional[CameraModel] = None, x_range=(-50.0, 50.0),
              y_range=(-25.0, 25.0), open_points: int = DEFAULT_OPEN_POINTS) -> MapFrame:
    """Ground-truth local map for one frame, with topology carried over from the scene.

    A clipped lane keeps its successor edge only from its last piece to the
    successor's first piece; traffic elements are the posts visible in
    ``camera`` (default: the rig's front camera).
    """
    camera = camera or default_rig()[0]
    crop = _crop(scene.instances, ego_pose, x_range, y_range, open_points)
    scene_lane_pos = {si: k for k, si in enumerate(scene.lane_indices())}
    lanes = [(i, src) for i, (inst, src) in enumerate(zip(crop.instances, crop.source))
             if inst.cls is MapClass.LANE_SEGMENT]
    tes, te_src = [], []
    for ai, anchor in enumerate(scene.te_anchors):
        box = project_anchor(anchor, ego_pose, camera)
        if box is not None:
            tes.append(TrafficElement(box, anchor.category))
            te_src.append(ai)
    n = len(lanes)
    ll, lt = np.zeros((n, n)), np.zeros((n, len(tes)))
    g_ll, g_lt = scene.topology.ll_scores, scene.topology.lt_scores
    for a, (_, (si, ka, na)) in enumerate(lanes):
        for b, (_, (sj, kb, _)) in enumerate(lanes):
            if si != sj and ka == na - 1 and kb == 0 and g_ll[scene_lane_pos[si], scene_lane_pos[sj]] > 0.5:
                ll[a, b] = 1.0
        for t, ai in enumerate(te_src):
            lt[a, t] = g_lt[scene_lane_pos[si], ai]
    return MapFrame(crop.instances, tes, TopologyGraph(ll, lt), (camera.width, camera.height))


# -- sensors and trajectories ---------------------------------------------------


def default_rig(width: int = DEFAULT_IMAGE_SIZE[0], height: int = DEFAULT_IMAGE_SIZE[1], fx: float = 1266.0,
                back_fx: float = 809.0) -> list[CameraModel]:
    """Six cameras around the roof: front, front-left, front-right, back-left, back-right, back.

    The back camera is wider so that together the six cover the full horizon.
    """
    yaws = (0.0, 55.0, -55.0, 110.0, -110.0, 180.0)
    scale = width / 1600
    return [CameraModel.looking(math.radians(y), (1.0, 0.0, 1.6), fx=(back_fx if y == 180.0 else fx) * scale,
                                width=width, height=height) for y in yaws]


@dataclass(frozen=True)
class LidarConfig:
    n_azimuth: int = 720
    elevations_deg: tuple[float, ...] = tuple(np.linspace(-25.0, -2.0, 16).round(6))
    max_range: float = 50.0
    sensor_height: float = 1.8
    range_jitter: float = 0.01

    def __post_init__(self):
        if self.n_azimuth < 1 or not self.elevations_deg or self.max_range <= 0:
            raise InvalidArgumentError("invalid lidar config")
        if any(e >= 0 for e in self.elevations_deg):
            raise InvalidArgumentError("ground rays must point down")


def gen_lidar(scene: Scene, ego_pose: SE3Pose, config: LidarConfig = LidarConfig(), seed: int = 0) -> np.ndarray:
    """Ego-frame lidar returns: ground hits from a fixed ray pattern plus points on light posts."""
    rng = np.random.default_rng([scene.seed, seed])
    h = _height_field(scene.seed, scene.config.height_amplitude)
    az = np.arange(config.n_azimuth) * (2 * math.pi / config.n_azimuth)
    el = np.radians(np.asarray(config.elevations_deg))
    azg, elg = np.meshgrid(az, el)
    dirs = np.stack([np.cos(elg) * np.cos(azg), np.cos(elg) * np.sin(azg), np.sin(elg)], axis=-1).reshape(-1, 3)
    origin = np.array([0.0, 0.0, config.sensor_height])
    world_from_ego = ego_pose
    # ground z in the ego frame is found by a few fixed-point steps on the height field
    t = origin[2] / -dirs[:, 2]
    for _ in range(5):
        hit = origin + t[:, None] * dirs
        w = world_from_ego.apply(hit)
        ground_world = np.column_stack([w[:, :2], h(w[:, 0], w[:, 1])])
        gz = world_from_ego.inverse().apply(ground_world)[:, 2]
        t = (origin[2] - gz) / -dirs[:, 2]
    t = t + rng.normal(scale=config.range_jitter, size=t.shape)
    keep = (t > 0) & (t <= config.max_range)
    pts = origin + t[keep, None] * dirs[keep]
    posts = []
    for anchor in scene.te_anchors:
        x, y, z = anchor.position
        base = float(h(x, y))
        col = np.column_stack([np.full(20, x), np.full(20, y), np.linspace(base, z, 20)])
        local = world_from_ego.inverse().apply(col)
        d = np.linalg.norm(local - origin, axis=1)
        posts.append(local[d <= config.max_range])
    return np.vstack([pts] + posts)


@dataclass
class DriveSequence:
    scene: Scene
    poses: list[SE3Pose]
    rig: list[CameraModel]
    lidar: Optional[list[np.ndarray]] = None


def gen_sequence(scene: Scene, n_frames: int = 48, spacing: float = 0.5, lane: int = 0,
                 start_x: Optional[float] = None, rig: Optional[list[CameraModel]] = None,
                 with_lidar: bool = False, lidar_config: LidarConfig = LidarConfig()) -> DriveSequence:
    """Straight drive along a main-road lane at ``spacing`` metres per frame."""
    if n_frames < 1 or spacing < 0 or spacing > 3.0:
        raise InvalidArgumentError("need n_frames >= 1 and 0 <= spacing <= 3 m")
    if not 0 <= lane < scene.config.n_lanes:
        raise InvalidArgumentError(f"lane {lane} not on a {scene.config.n_lanes}-lane road")
    c = scene.config
    y = -c.n_lanes * c.lane_width / 2 + (lane + 0.5) * c.lane_width
    x0 = -(n_frames - 1) * spacing / 2 if start_x is None else start_x
    poses = [SE3Pose.from_xy_yaw(x0 + k * spacing, y, 0.0) for k in range(n_frames)]
    rig = rig or default_rig()
    lidar = [gen_lidar(scene, p, lidar_config, k) for k, p in enumerate(poses)] if with_lidar else None
    return DriveSequence(scene, poses, rig, lidar)


# -- topology training data ---------------------------------------------------


def _arc_points(start: np.ndarray, heading: float, length: float, curvature: float, n: int) -> tuple[np.ndarray, float]:
    s = np.linspace(0.0, length, n)
    if abs(curvature) < 1e-9:
        x = start[0] + s * math.cos(heading)
        y = start[1] + s * math.sin(heading)
    else:
        x = start[0] + (np.sin(heading + curvature * s) - math.sin(heading)) / curvature
        y = start[1] - (np.cos(heading + curvature * s) - math.cos(heading)) / curvature
    return np.stack([x, y], axis=1), heading + curvature * length


def _partition(total: int, rng: np.random.Generator, max_part: int = 4) -> list[int]:
    parts = []
    while total > 0:
        p = int(rng.integers(1, min(max_part, total) + 1))
        parts.append(p)
        total -= p
    return parts


def _topo_scene(rng: np.random.Generator, n_lanes: int, n_tes: int, points: int, extent, succ_gap: float,
                margin: float, image_size) -> Optional[TopoSample]:
    hx, hy = extent
    lanes, ll_pairs = [], []
    for chain_len in _partition(n_lanes, rng):
        pos = rng.uniform([-hx * 0.8, -hy * 0.8], [hx * 0.8, hy * 0.8])
        heading = float(rng.uniform(-math.pi, math.pi))
        for k in range(chain_len):
            length = float(rng.uniform(6.0, 14.0))
            xy, heading = _arc_points(pos, heading, length, float(rng.uniform(-0.03, 0.03)), points)
            if np.any(np.abs(xy[:, 0]) > hx) or np.any(np.abs(xy[:, 1]) > hy):
                return None
            z = 0.02 * xy[:, 0] + 0.01 * xy[:, 1]
            if k:
                ll_pairs.append((len(lanes) - 1, len(lanes)))
            lanes.append(np.column_stack([xy, z]))
            # the successor starts near this end, within succ_gap
            r = succ_gap * math.sqrt(rng.uniform())
            a = rng.uniform(0, 2 * math.pi)
            pos = xy[-1] + r * np.array([math.cos(a), math.sin(a)])
    ll = np.zeros((n_lanes, n_lanes))
    for i, j in ll_pairs:
        ll[i, j] = 1.0
    ends = np.array([p[-1, :2] for p in lanes])
    starts = np.array([p[0, :2] for p in lanes])
    gap = np.linalg.norm(ends[:, None] - starts[None], axis=-1)
    off = ~np.eye(n_lanes, dtype=bool) & (ll == 0)
    if np.any(gap[off] < margin):
        return None

    # a traffic element governs lanes whose end lies in a lateral band it encodes
    w, h = image_size
    tes, lt = [], np.zeros((n_lanes, n_tes))
    band, clear = 1.5, 3.0
    for t in range(n_tes):
        for _ in range(50):
            y_te = float(ends[rng.integers(n_lanes), 1] + rng.uniform(-1.0, 1.0))
            d = np.abs(ends[:, 1] - y_te)
            if abs(y_te) < hy and np.all((d <= band) | (d >= clear)):
                break
        else:
            return None
        lt[:, t] = d <= band
        uc = w / 2 * (1 - y_te / hy)
        vc = float(rng.uniform(0.2, 0.45)) * h
        bw, bh = rng.uniform(20, 60, size=2)
        tes.append(TrafficElement((uc - bw / 2, vc - bh / 2, uc + bw / 2, vc + bh / 2),
                                  int(rng.integers(len(TE_CATEGORIES)))))
    return TopoSample([Polyline(p) for p in lanes], tes, ll, lt, image_size)


def gen_topology_dataset(n_scenes: int, seed: int, n_lanes: int = 8, n_tes: int = 2,
                         points: int = DEFAULT_OPEN_POINTS, extent=(50.0, 25.0), succ_gap: float = 0.3,
                         margin: float = 2.0, image_size=DEFAULT_IMAGE_SIZE) -> list[TopoSample]:
    """Scenes of lane chains with a separable successor rule.

    Lane ``j`` succeeds lane ``i`` exactly when it starts within ``succ_gap``
    of ``i``'s end; every other ordered pair is at least ``margin`` apart, so
    the rule "successor iff end-to-start distance < 1 m" labels every pair.
    """
    if n_scenes < 1 or n_lanes < 1 or n_tes < 0:
        raise InvalidArgumentError("need n_scenes >= 1, n_lanes >= 1, n_tes >= 0")
    if not succ_gap < margin:
        raise InvalidArgumentError("successor gap must be below the non-successor margin")
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < n_scenes:
        tries += 1
        if tries > 200 * n_scenes:
            raise InvalidArgumentError("could not place lanes with the requested margins")
        s = _topo_scene(rng, n_lanes, n_tes, points, extent, succ_gap, margin, image_size)
        if s is not None:
            out.append(s)
    return out
