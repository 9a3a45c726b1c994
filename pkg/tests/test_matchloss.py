import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import brute_force_assignment_cost
from vmkit.elements import MapClass, MapInstance, resample_ped_crossing
from vmkit.errors import DegenerateGeometryError, InvalidArgumentError
from vmkit.geom import Polyline, SE3Pose, transform
from vmkit.matchloss import (
    Assignment,
    CostWeights,
    depth_ce_loss,
    edge_direction_loss,
    focal_loss,
    geometric3d_loss,
    hungarian,
    match_instances,
    point2point_loss,
    rasterize,
    seg_loss,
    seg_loss_terms,
)
from vmkit.svt import BevGridSpec, CameraModel, DepthBins, DepthMap


def divider(points, score=1.0):
    return MapInstance(MapClass.DIVIDER, Polyline(np.asarray(points, float)), score)


def ped(corners, score=1.0):
    c = np.asarray(corners, float)
    if c.shape[1] == 2:
        c = np.hstack([c, np.zeros((4, 1))])
    return resample_ped_crossing(c, score)


def random_line(rng, n=10, cls=MapClass.DIVIDER):
    pts = np.cumsum(rng.normal(size=(n, 3)), axis=0)
    return MapInstance(cls, Polyline(pts))


def test_hungarian_examples():
    a = hungarian([[1, 2], [2, 1]])
    assert a.pairs == [(0, 0), (1, 1)] and a.cost == 2
    assert hungarian([[5, 1, 9]]).pairs == [(0, 1)]
    empty = hungarian(np.zeros((0, 3)))
    assert empty.pairs == [] and empty.unmatched_gts == [0, 1, 2]
    with pytest.raises(InvalidArgumentError):
        hungarian([[1, math.inf]])


def test_hungarian_6x6_exhaustive(rng):
    for _ in range(20):
        cost = rng.uniform(0, 10, size=(6, 6))
        assert hungarian(cost).cost == pytest.approx(brute_force_assignment_cost(cost))


def test_hungarian_matches_exhaustive_search(rng):
    for _ in range(1000):
        p, g = rng.integers(1, 7, size=2)
        cost = rng.uniform(0, 10, size=(p, g))
        a = hungarian(cost)
        assert len(a.pairs) == min(p, g)
        assert a.cost == pytest.approx(brute_force_assignment_cost(cost), abs=1e-9)


def test_assignment_validation():
    with pytest.raises(InvalidArgumentError):
        Assignment([(0, 0), (1, 0)], 2, 2)
    with pytest.raises(InvalidArgumentError):
        Assignment([(0, 5)], 1, 2)
    a = Assignment([(1, 0)], 2, 3)
    assert a.unmatched_preds == [0] and a.unmatched_gts == [1, 2] and a.gt_of(1) == 0 and a.gt_of(0) is None


def test_point2point_examples(rng):
    g = random_line(rng)
    loss, perm = point2point_loss(g, g)
    assert loss == 0 and list(perm) == list(range(10))
    shifted = g.with_geometry(Polyline(g.points + [1, 0, 0]))
    assert point2point_loss(shifted, g)[0] == pytest.approx(1.0)
    rev = g.with_geometry(g.geometry.reversed())
    loss, perm = point2point_loss(rev, g)
    assert loss == 0 and list(perm) == list(range(9, -1, -1))
    with pytest.raises(InvalidArgumentError):
        point2point_loss(random_line(rng, 5), g)
    with pytest.raises(InvalidArgumentError):
        point2point_loss(random_line(rng, cls=MapClass.BOUNDARY), g)


def test_point2point_ped_permutations_are_free():
    g = ped([[0, 0], [4, 0], [4, 2], [0, 2]])
    from vmkit.elements import ped_permutations

    for perm in ped_permutations(g):
        p = MapInstance(MapClass.PED_CROSSING, Polyline(g.points[perm], closed=True), 1.0, g.corner_indices)
        assert point2point_loss(p, g)[0] == pytest.approx(0.0, abs=1e-12)


def test_point2point_symmetric_and_group_invariant(rng):
    for _ in range(50):
        a = ped(np.array([[0, 0], [4, 0], [4, 2], [0, 2]]) + rng.normal(scale=0.3, size=(4, 2)))
        b = ped(np.array([[0, 0], [4, 0], [4, 2], [0, 2]]) + rng.normal(scale=0.3, size=(4, 2)))
        assert point2point_loss(a, b)[0] == pytest.approx(point2point_loss(b, a)[0])
        x, y = random_line(rng), random_line(rng)
        assert point2point_loss(x, y)[0] == pytest.approx(point2point_loss(y, x)[0])
        y_rev = y.with_geometry(y.geometry.reversed())
        assert point2point_loss(x, y_rev)[0] == pytest.approx(point2point_loss(x, y)[0])


def test_edge_direction_examples():
    g = divider([[0, 0], [1, 0], [2, 0]])
    ident = np.arange(3)
    assert edge_direction_loss(g, g, ident) == 0
    back = divider([[2, 0], [1, 0], [0, 0]])
    assert edge_direction_loss(back, g, ident) == pytest.approx(2.0)
    up = divider([[0, 0], [0, 1], [0, 2]])
    assert edge_direction_loss(up, g, ident) == pytest.approx(1.0)
    # a zero-length predicted edge is skipped
    stall = divider([[0, 0], [0, 0], [1, 0]])
    assert edge_direction_loss(stall, g, ident) == pytest.approx(0.0)
    flat = divider([[0, 0], [0, 0], [0, 0]])
    with pytest.raises(DegenerateGeometryError):
        edge_direction_loss(flat, g, ident)
    with pytest.raises(InvalidArgumentError):
        edge_direction_loss(g, g, [0, 0, 1])


def test_geometric3d_examples(rng):
    g = random_line(rng)
    ident = np.arange(10)
    moved = g.with_geometry(Polyline(g.points + [3.0, -2.0, 0.5]))
    assert geometric3d_loss(moved, g, ident) == pytest.approx(0.0, abs=1e-12)

    unit = divider([[0, 0], [1, 0], [1, 1], [2, 1]])
    c = unit.points.mean(axis=0)
    scaled = unit.with_geometry(Polyline(c + 2 * (unit.points - c)))
    e = np.diff(unit.points, axis=0)
    assert geometric3d_loss(scaled, unit, np.arange(4)) == pytest.approx(np.linalg.norm(e, axis=1).mean())

    ramp = g.with_geometry(Polyline(g.points + np.outer(np.arange(10), [0, 0, 0.3])))
    assert geometric3d_loss(ramp, g, ident) > geometric3d_loss(ramp, g, ident, dims=2)


def test_geometric3d_rotation_equivariance(rng):
    for _ in range(30):
        a, b = random_line(rng), random_line(rng)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        pose = SE3Pose(q, rng.normal(size=3))
        ra = a.with_geometry(transform(a.geometry, pose))
        rb = b.with_geometry(transform(b.geometry, pose))
        perm = point2point_loss(a, b)[1]
        assert geometric3d_loss(ra, rb, perm) == pytest.approx(geometric3d_loss(a, b, perm), rel=1e-9)


def _focal_oracle(p, labels, gamma, alpha):
    total = 0.0
    for i in range(p.shape[0]):
        for k in range(p.shape[1]):
            q = p[i, k]
            if labels[i] == k:
                total += -alpha * (1 - q) ** gamma * math.log(q)
            else:
                total += -(1 - alpha) * q**gamma * math.log(1 - q)
    return total / p.shape[0]


def test_focal_examples(rng):
    p = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert focal_loss(p, [0, 1]) == 0
    q = rng.uniform(0.05, 0.95, size=(6, 4))
    lab = rng.integers(0, 4, size=6)
    ce = -np.mean(np.log(q[np.arange(6), lab]))
    assert focal_loss(q, lab, gamma=0.0, alpha=1.0) == pytest.approx(ce)
    lab[2] = -1
    assert focal_loss(q, lab) == pytest.approx(_focal_oracle(q, lab, 2.0, 0.25))
    with pytest.raises(InvalidArgumentError):
        focal_loss([[1.2]], [0])
    with pytest.raises(InvalidArgumentError):
        focal_loss([[0.5]], [3])


def test_depth_ce(rng):
    cam = CameraModel.looking(0.0, width=8, height=4, fx=10.0)
    bins = DepthBins()
    depth = np.zeros((4, 8))
    depth[1, 2] = 10.2  # bin 9
    depth[3, 5] = 30.0  # bin 29
    depth[0, 0] = 80.0  # out of range, ignored
    target = DepthMap(cam, depth, 1)
    onehot = np.zeros((55, 4, 8))
    onehot[0] = 1.0
    onehot[:, 1, 2] = 0
    onehot[9, 1, 2] = 1
    onehot[:, 3, 5] = 0
    onehot[29, 3, 5] = 1
    loss, n = depth_ce_loss(onehot, target, bins)
    assert loss == 0 and n == 2
    uniform = np.full((55, 4, 8), 1 / 55)
    assert depth_ce_loss(uniform, target, bins)[0] == pytest.approx(math.log(55))
    assert depth_ce_loss(uniform, DepthMap(cam, np.zeros((4, 8)), 1), bins) == (0.0, 0)
    with pytest.raises(InvalidArgumentError):
        depth_ce_loss(uniform * 2, target, bins)


def _segment_hits_cell(a, b, x0, y0, x1, y1):
    """Separating-axis test: does segment a-b touch the box interior or boundary?"""
    if max(a[0], b[0]) < x0 or min(a[0], b[0]) > x1 or max(a[1], b[1]) < y0 or min(a[1], b[1]) > y1:
        return False
    d = b - a
    sides = [d[0] * (cy - a[1]) - d[1] * (cx - a[0]) for cx, cy in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    return not (all(s > 0 for s in sides) or all(s < 0 for s in sides))


def line_cell_oracle(a, b, spec):
    cells = set()
    for r in range(spec.rows):
        for c in range(spec.cols):
            x0 = spec.x_range[0] + c * spec.dx
            y0 = spec.y_range[0] + r * spec.dy
            if _segment_hits_cell(a, b, x0, y0, x0 + spec.dx, y0 + spec.dy):
                cells.add((r, c))
    return cells


def test_rasterize_matches_line_cell_oracle(rng):
    spec = BevGridSpec(20, 30, (-7.5, 7.5), (-5.0, 5.0))
    for _ in range(60):
        a, b = rng.uniform([-9, -6], [9, 6]), rng.uniform([-9, -6], [9, 6])
        mask = rasterize([divider([a, b])], spec)
        got = set(zip(*np.nonzero(mask[MapClass.DIVIDER.index])))
        assert got == line_cell_oracle(a, b, spec)


def test_rasterize_straight_divider_run():
    spec = BevGridSpec(20, 30, (-7.5, 7.5), (-5.0, 5.0))
    mask = rasterize([divider([[-20, 0.1], [20, 0.1]])], spec)
    ch = mask[MapClass.DIVIDER.index]
    assert ch.sum() == 30 and ch[10].all()
    thick = rasterize([divider([[-20, 0.1], [20, 0.1]])], spec, thickness=2)[MapClass.DIVIDER.index]
    assert thick.sum() == 90 and thick[9:12].all()
    assert not rasterize([], spec).any()
    with pytest.raises(InvalidArgumentError):
        rasterize([], spec, thickness=0)


def test_rasterize_ped_fill_count():
    spec = BevGridSpec(8, 8, (-2.0, 2.0), (-2.0, 2.0))
    sq = ped([[0.1, 0.1], [1.1, 0.1], [1.1, 1.1], [0.1, 1.1]])
    ch = rasterize([sq], spec)[MapClass.PED_CROSSING.index]
    # 1 m^2 of 0.25 m^2 cells: 4 interior centres, up to 9 cells touched
    assert 4 <= ch.sum() <= 9
    xs, ys = spec.cell_centers()
    inside = (xs > 0.1) & (xs < 1.1) & (ys > 0.1) & (ys < 1.1)
    assert np.all(ch[inside] == 1)
    big = ped([[-1.3, -1.3], [1.3, -1.3], [1.3, 1.3], [-1.3, 1.3]])
    ch = rasterize([big], spec)[MapClass.PED_CROSSING.index]
    assert ch.sum() == 36 and not ch[0].any() and not ch[:, 7].any()


def test_rasterize_only_present_channels(rng):
    spec = BevGridSpec(20, 30, (-7.5, 7.5), (-5.0, 5.0))
    insts = [random_line(rng, cls=MapClass.BOUNDARY)]
    mask = rasterize(insts, spec)
    for cls in MapClass:
        if cls is not MapClass.BOUNDARY:
            assert not mask[cls.index].any()


def test_seg_loss(rng):
    g = (rng.uniform(size=(5, 6)) > 0.5).astype(float)
    assert seg_loss_terms(g, g) == (0.0, 0.0)
    dice, bce = seg_loss_terms(np.full((5, 6), 0.5), np.zeros((5, 6)))
    assert bce == pytest.approx(math.log(2))
    assert dice == pytest.approx(1 - 1 / (15 + 1))
    p = rng.uniform(0.01, 0.99, size=(5, 6))
    sp = float(sum(p.flat))
    spg = float(sum(a * b for a, b in zip(p.flat, g.flat)))
    d = 1 - (2 * spg + 1) / (sp + float(g.sum()) + 1)
    b = -sum(y * math.log(q) + (1 - y) * math.log(1 - q) for q, y in zip(p.flat, g.flat)) / 30
    assert seg_loss(p, g) == pytest.approx(d + b)
    with pytest.raises(InvalidArgumentError):
        seg_loss(p, g[:4])


def test_cost_weights():
    with pytest.raises(InvalidArgumentError):
        CostWeights(0, 0)
    with pytest.raises(InvalidArgumentError):
        CostWeights(-1, 1)


def test_match_instances(rng):
    gts = [random_line(rng) for _ in range(3)]
    a = match_instances(gts, gts)
    assert a.pairs == [(0, 0), (1, 1), (2, 2)] and a.cost == 0
    preds = [gts[1], gts[0]]
    assert match_instances(preds, gts[:2]).pairs == [(0, 1), (1, 0)]
    bounds = [random_line(rng, cls=MapClass.BOUNDARY) for _ in range(2)]
    empty = match_instances(bounds, gts)
    assert empty.pairs == [] and empty.unmatched_preds == [0, 1]


def test_match_instances_2x2_enumeration(rng):
    w = CostWeights()
    for _ in range(30):
        preds = [random_line(rng).with_score(float(rng.uniform())) for _ in range(2)]
        gts = [random_line(rng) for _ in range(2)]

        def c(i, j):
            return w.lam_cls * (1 - preds[i].score) + w.lam_pts * point2point_loss(preds[i], gts[j])[0]

        straight, crossed = c(0, 0) + c(1, 1), c(0, 1) + c(1, 0)
        a = match_instances(preds, gts, w)
        want = [(0, 0), (1, 1)] if straight <= crossed else [(0, 1), (1, 0)]
        assert a.pairs == want and a.cost == pytest.approx(min(straight, crossed))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([MapClass.DIVIDER, MapClass.BOUNDARY]), min_size=0, max_size=5),
       st.lists(st.sampled_from([MapClass.DIVIDER, MapClass.BOUNDARY]), min_size=0, max_size=5),
       st.integers(0, 1000))
def test_match_instances_never_crosses_classes(pc, gc, seed):
    rng = np.random.default_rng(seed)
    preds = [random_line(rng, cls=c) for c in pc]
    gts = [random_line(rng, cls=c) for c in gc]
    a = match_instances(preds, gts)
    for i, j in a.pairs:
        assert preds[i].cls is gts[j].cls
    for cls in (MapClass.DIVIDER, MapClass.BOUNDARY):
        assert sum(preds[i].cls is cls for i, _ in a.pairs) == min(pc.count(cls), gc.count(cls))
