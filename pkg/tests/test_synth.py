import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmkit.elements import DEFAULT_OPEN_POINTS, PED_POINTS, MapClass, simplify_to_corners
from vmkit.evalm import det_score
from vmkit.errors import InvalidArgumentError
from vmkit.geom import SE3Pose, arc_length
from vmkit.svt import lidar_to_depthmap, project_points
from vmkit.synth import (
    LidarConfig,
    SceneConfig,
    clip_polygon,
    clip_polyline,
    default_rig,
    gen_lidar,
    gen_scene,
    gen_sequence,
    local_crop,
    local_map,
    project_anchor,
)


def test_straight_road_counts():
    scene = gen_scene(3, SceneConfig(n_lanes=2, intersections=0, length=40.0, section_length=100.0))
    lanes = [scene.instances[i] for i in scene.lane_indices()]
    assert len(lanes) == 2
    assert scene.topology.ll_scores.sum() == 0
    assert sum(i.cls is MapClass.DIVIDER for i in scene.instances) == 1
    assert sum(i.cls is MapClass.BOUNDARY for i in scene.instances) == 2
    assert not scene.te_anchors


def test_sections_chain_as_successors():
    scene = gen_scene(1, SceneConfig(n_lanes=3, intersections=0, length=200.0, section_length=50.0))
    lanes = [scene.instances[i] for i in scene.lane_indices()]
    assert len(lanes) == 12
    ll = scene.topology.ll_scores
    assert ll.sum() == 9
    for i, j in zip(*np.nonzero(ll)):
        # a successor starts exactly where its predecessor ends
        assert np.allclose(lanes[i].points[-1], lanes[j].points[0])
    # every lane chain is a path: at most one successor and one predecessor
    assert ll.sum(axis=1).max() == 1 and ll.sum(axis=0).max() == 1


def test_junction_scene_structure():
    cfg = SceneConfig(n_lanes=2, intersections=2)
    scene = gen_scene(5, cfg)
    assert len(scene.te_anchors) == 2
    assert sum(i.cls is MapClass.PED_CROSSING for i in scene.instances) == 8
    lt = scene.topology.lt_scores
    # each light governs the main lanes that end at its junction entry
    assert np.all(lt.sum(axis=0) == cfg.n_lanes)
    lanes = [scene.instances[i] for i in scene.lane_indices()]
    for i, t in zip(*np.nonzero(lt)):
        end = lanes[i].points[-1]
        assert scene.te_anchors[t].position[0] > end[0]
    for inst in scene.instances:
        if inst.cls is MapClass.PED_CROSSING:
            assert inst.is_canonical_ped


def test_scene_is_deterministic():
    a, b = gen_scene(9), gen_scene(9)
    assert a.instances == b.instances and np.array_equal(a.topology.ll_scores, b.topology.ll_scores)
    assert gen_scene(10).instances != a.instances


def test_scene_config_validation():
    with pytest.raises(InvalidArgumentError):
        SceneConfig(n_lanes=0)
    with pytest.raises(InvalidArgumentError):
        SceneConfig(intersections=5, length=100.0)
    with pytest.raises(InvalidArgumentError):
        SceneConfig(cross_length=5.0)


def test_clip_polyline_splits_and_interpolates():
    pts = np.array([[-10.0, 0, 0], [0, 0, 1], [10, 0, 2]])
    (piece, idx), = clip_polyline(pts, (-5, -1), (5, 1))
    assert np.allclose(piece, [[-5, 0, 0.5], [0, 0, 1], [5, 0, 1.5]])
    assert np.allclose(idx, [0.5, 1.0, 1.5])
    # in, out, back in
    zig = np.array([[0.0, 0, 0], [0, 10, 0], [2, 10, 0], [2, 0, 0]])
    pieces = clip_polyline(zig, (-1, -1), (3, 5))
    assert len(pieces) == 2
    assert clip_polyline(np.array([[20.0, 20, 0], [30, 30, 0]]), (-1, -1), (1, 1)) == []


def test_clip_polygon_area(rng):
    for _ in range(50):
        lo = rng.uniform(-5, 0, size=2)
        hi = lo + rng.uniform(1, 5, size=2)
        c = rng.uniform(-3, 3, size=2)
        sq = np.array([[c[0], c[1], 0], [c[0] + 2, c[1], 0], [c[0] + 2, c[1] + 2, 0], [c[0], c[1] + 2, 0]])
        poly = clip_polygon(sq, lo, hi)
        ox = max(0.0, min(hi[0], c[0] + 2) - max(lo[0], c[0]))
        oy = max(0.0, min(hi[1], c[1] + 2) - max(lo[1], c[1]))
        area = 0.0 if len(poly) < 3 else 0.5 * abs(np.dot(poly[:, 0], np.roll(poly[:, 1], -1))
                                                   - np.dot(poly[:, 1], np.roll(poly[:, 0], -1)))
        assert area == pytest.approx(ox * oy, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(-80, 80), st.floats(-4, 4), st.floats(-0.6, 0.6))
def test_local_crop_invariants(seed, x, y, yaw):
    scene = gen_scene(seed)
    crop = local_crop(scene, SE3Pose.from_xy_yaw(x, y, yaw))
    for inst in crop:
        pts = inst.points
        assert np.all(np.abs(pts[:, 0]) <= 50 + 1e-6) and np.all(np.abs(pts[:, 1]) <= 25 + 1e-6)
        if inst.cls is MapClass.PED_CROSSING:
            assert len(pts) == PED_POINTS and inst.is_canonical_ped
        else:
            assert len(pts) == DEFAULT_OPEN_POINTS
            assert arc_length(inst.geometry) >= 1.0 - 1e-9


def test_local_crop_identity_pose_keeps_centre_geometry():
    scene = gen_scene(2, SceneConfig(intersections=0, length=60.0, section_length=100.0))
    crop = local_crop(scene, SE3Pose.identity(), x_range=(-10, 10))
    lanes = [i for i in crop if i.cls is MapClass.LANE_SEGMENT]
    assert len(lanes) == 2
    for lane in lanes:
        assert lane.points[0, 0] == pytest.approx(-10) and lane.points[-1, 0] == pytest.approx(10)
        assert np.allclose(lane.left_offset, 1.75)
    with pytest.raises(InvalidArgumentError):
        local_crop(scene, SE3Pose.identity(), x_range=(5, -5))


def test_local_map_remaps_topology():
    scene = gen_scene(4, SceneConfig(n_lanes=2, intersections=0, length=200.0, section_length=25.0))
    frame = local_map(scene, SE3Pose.from_xy_yaw(0.0, 0.0, 0.0))
    lanes = frame.lanes()
    # 100 m window over 25 m sections: 4 pieces per lane plus touching ends trimmed below 1 m
    assert len(lanes) == 8
    ll = frame.topology.ll_scores
    assert ll.sum() == 6
    for i, j in zip(*np.nonzero(ll)):
        assert np.allclose(lanes[i].points[-1], lanes[j].points[0])


def test_local_map_traffic_element_visibility():
    scene = gen_scene(0)
    anchor = scene.te_anchors[0]
    far = SE3Pose.from_xy_yaw(anchor.position[0] - 25.0, -1.75, 0.0)
    frame = local_map(scene, far)
    assert len(frame.traffic_elements) == 1
    u0, v0, u1, v1 = frame.traffic_elements[0].bbox
    assert 0 <= u0 < u1 <= 1600 and 0 <= v0 < v1 <= 900
    assert frame.topology.lt_scores.sum() == scene.config.n_lanes
    behind = SE3Pose.from_xy_yaw(anchor.position[0] + 10.0, -1.75, 0.0)
    assert project_anchor(anchor, behind, default_rig()[0]) is None


def test_default_rig_covers_horizon():
    rig = default_rig()
    assert len(rig) == 6
    seen = np.zeros(360, bool)
    for deg in range(360):
        a = math.radians(deg)
        p = np.array([[20 * math.cos(a), 20 * math.sin(a), 1.6]])
        for cam in rig:
            u, _, _, valid = project_points(cam, p)
            seen[deg] |= bool(valid[0])
    assert seen.all()


def test_sequence_spacing_and_lidar():
    scene = gen_scene(6)
    seq = gen_sequence(scene, n_frames=48, with_lidar=True, lidar_config=LidarConfig(n_azimuth=180))
    assert len(seq.poses) == 48 and len(seq.lidar) == 48
    steps = [np.linalg.norm(b.translation - a.translation) for a, b in zip(seq.poses, seq.poses[1:])]
    assert np.allclose(steps, 0.5)
    cloud = seq.lidar[0]
    assert np.all(np.linalg.norm(cloud - [0, 0, 1.8], axis=1) <= 50 + 1e-6)
    # ground returns sit on the height field, within the amplitude band
    posts = seq.poses[0].inverse().apply(np.array([a.position for a in scene.te_anchors]))
    near_post = np.linalg.norm(cloud[:, None, :2] - posts[None, :, :2], axis=-1).min(axis=1) < 0.5
    ground = cloud[~near_post]
    assert np.abs(ground[:, 2]).max() <= 1.5 * scene.config.height_amplitude + 0.1
    dm = lidar_to_depthmap(seq.rig[0], cloud, 8)
    assert (dm.depth > 0).any()
    with pytest.raises(InvalidArgumentError):
        gen_sequence(scene, n_frames=0)
    with pytest.raises(InvalidArgumentError):
        gen_sequence(scene, lane=5)


def test_lidar_is_deterministic():
    scene = gen_scene(8)
    pose = SE3Pose.from_xy_yaw(3.0, 1.0, 0.2)
    cfg = LidarConfig(n_azimuth=90)
    assert np.array_equal(gen_lidar(scene, pose, cfg, 1), gen_lidar(scene, pose, cfg, 1))
    assert not np.array_equal(gen_lidar(scene, pose, cfg, 1), gen_lidar(scene, pose, cfg, 2))


def test_ped_crossings_have_four_corners():
    scene = gen_scene(11, SceneConfig(intersections=1))
    peds = [i for i in scene.instances if i.cls is MapClass.PED_CROSSING]
    assert peds
    for p in peds:
        corners = simplify_to_corners(p.geometry)
        assert corners.shape == (4, 3)
        assert np.allclose(corners, p.points[list(p.corner_indices)])


def test_local_crop_far_and_whole():
    scene = gen_scene(12)
    assert local_crop(scene, SE3Pose.from_xy_yaw(1000.0, 1000.0, 0.0)) == []
    whole = local_crop(scene, SE3Pose.identity(), x_range=(-200, 200), y_range=(-100, 100))
    assert len(whole) == len(scene.instances)
    # nothing was cut, so only the point count changes
    for got, src in zip(whole, scene.instances):
        assert got.cls is src.cls
        assert np.allclose(got.points[[0, -1]], src.points[[0, -1]])


def test_clipped_divider_endpoints_on_boundary():
    scene = gen_scene(13, SceneConfig(intersections=0, length=200.0))
    crop = local_crop(scene, SE3Pose.from_xy_yaw(0.0, 0.0, 0.3))
    dividers = [i for i in crop if i.cls is MapClass.DIVIDER]
    assert dividers
    for d in dividers:
        for p in d.points[[0, -1]]:
            assert min(abs(abs(p[0]) - 50), abs(abs(p[1]) - 25)) < 1e-6


def test_local_crop_scores_perfectly_against_itself():
    scene = gen_scene(14)
    seq = gen_sequence(scene, n_frames=10, spacing=2.0)
    frames = [local_map(scene, p) for p in seq.poses]
    for cls in MapClass:
        score = det_score([f.instances for f in frames], [f.instances for f in frames], cls)
        assert score in (None, 1.0)


def test_lidar_lands_in_depth_pixels():
    scene = gen_scene(15)
    pose = SE3Pose.from_xy_yaw(-20.0, -1.75, 0.0)
    cloud = gen_lidar(scene, pose, LidarConfig(n_azimuth=360))
    for cam in default_rig():
        dm = lidar_to_depthmap(cam, cloud, 4)
        u, v, z, valid = project_points(cam, cloud)
        assert valid.sum() > 0
        hit = dm.depth[(v[valid] // 4).astype(int), (u[valid] // 4).astype(int)] > 0
        assert hit.mean() >= 0.9


def test_sequence_is_smooth():
    seq = gen_sequence(gen_scene(16), n_frames=48)
    for a, b in zip(seq.poses, seq.poses[1:]):
        assert np.linalg.norm(b.translation - a.translation) <= 3.0
        assert abs(b.yaw - a.yaw) <= 0.2
