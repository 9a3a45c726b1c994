import math

import numpy as np
import pytest

from _helpers import chamfer_oracle, corruption_sweep
from vmkit.elements import MapClass, MapInstance
from vmkit.errors import InvalidArgumentError
from vmkit.evalm import (
    DistanceFn,
    EvalConfig,
    EvalReport,
    box_iou,
    chamfer,
    det_score,
    detection_ap,
    discrete_frechet,
    evaluate,
    te_det_score,
    top_score,
    uniscore,
)
from vmkit.geom import Polyline
from vmkit.topo import MapFrame, TopologyGraph, TrafficElement


def line(points, cls=MapClass.DIVIDER, score=1.0):
    return MapInstance(cls, Polyline(np.asarray(points, float)), score)


def straight(x0, y, n=10, length=10.0, cls=MapClass.DIVIDER, score=1.0):
    xs = np.linspace(x0, x0 + length, n)
    return line(np.column_stack([xs, np.full(n, y)]), cls, score)


def frechet_oracle(a, b):
    """Min over every monotone coupling path of the max coupled distance."""
    n, m = len(a), len(b)
    best = math.inf

    def walk(i, j, worst):
        nonlocal best
        worst = max(worst, math.dist(a[i], b[j]))
        if worst >= best:
            return
        if i == n - 1 and j == m - 1:
            best = worst
            return
        if i + 1 < n:
            walk(i + 1, j, worst)
        if j + 1 < m:
            walk(i, j + 1, worst)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, worst)

    walk(0, 0, 0.0)
    return best


def test_chamfer(rng):
    a = straight(0, 0)
    assert chamfer(a, a) == 0
    assert chamfer(a, straight(0, 1.5)) == pytest.approx(1.5)
    for _ in range(30):
        p, q = rng.normal(size=(7, 3)), rng.normal(size=(5, 3))
        assert chamfer(p, q) == pytest.approx(chamfer_oracle(p, q))


def test_frechet(rng):
    a = straight(0, 0)
    assert discrete_frechet(a, a) == 0
    assert discrete_frechet(a, straight(0, 2.5)) == pytest.approx(2.5)
    for _ in range(40):
        p, q = rng.normal(size=(int(rng.integers(1, 6)), 2)), rng.normal(size=(int(rng.integers(1, 6)), 2))
        assert discrete_frechet(p, q) == pytest.approx(frechet_oracle(p, q))


def test_frechet_dominates_chamfer(rng):
    for _ in range(1000):
        p = rng.normal(size=(int(rng.integers(2, 12)), 3))
        q = rng.normal(size=(int(rng.integers(2, 12)), 3))
        assert discrete_frechet(p, q) >= chamfer(p, q) - 1e-12


def test_frechet_is_order_sensitive():
    a = straight(0, 0)
    rev = a.with_geometry(a.geometry.reversed())
    assert chamfer(a, rev) == 0 and discrete_frechet(a, rev) == pytest.approx(10.0)


def test_detection_ap_examples():
    gts = [straight(0, 0), straight(0, 20)]
    assert detection_ap(gts, gts, MapClass.DIVIDER) == 1.0
    assert detection_ap([], gts, MapClass.DIVIDER) == 0.0
    assert detection_ap(gts[:1], gts, MapClass.DIVIDER) == 0.5
    assert detection_ap(gts, gts, MapClass.BOUNDARY) is None
    # a false positive ranked above the true one: precision 1/2 at recall 1/2
    preds = [straight(0, 50, score=0.9), straight(0, 0, score=0.5)]
    assert detection_ap(preds, gts, MapClass.DIVIDER) == pytest.approx(0.25)
    with pytest.raises(InvalidArgumentError):
        detection_ap(gts, gts, MapClass.DIVIDER, threshold=0)


def test_det_score_offset_pattern():
    gts = [straight(0, 0), straight(0, 20)]
    preds = [straight(0, 2.0), straight(0, 22.0)]
    cfg = EvalConfig()
    aps = [detection_ap(preds, gts, MapClass.DIVIDER, DistanceFn.CHAMFER, t) for t in cfg.thresholds]
    assert aps == [0.0, 1.0, 1.0]
    assert det_score(preds, gts, MapClass.DIVIDER, cfg) == pytest.approx(2 / 3)
    assert det_score([], [], MapClass.DIVIDER) is None


def test_detection_ap_order_invariant_and_threshold_monotone(rng):
    for _ in range(100):
        gts = [straight(0, 6 * k) for k in range(4)]
        preds = []
        for k in range(int(rng.integers(0, 7))):
            off = rng.uniform(-4, 4, size=2)
            preds.append(straight(off[0], 6 * int(rng.integers(4)) + off[1], score=float(rng.uniform())))
        base = detection_ap(preds, gts, MapClass.DIVIDER, DistanceFn.CHAMFER, 1.5)
        shuffled = [preds[i] for i in rng.permutation(len(preds))]
        assert detection_ap(shuffled, gts, MapClass.DIVIDER, DistanceFn.CHAMFER, 1.5) == base
        aps = [detection_ap(preds, gts, MapClass.DIVIDER, DistanceFn.CHAMFER, t) for t in (0.5, 1, 2, 3, 5)]
        assert all(b >= a - 1e-12 for a, b in zip(aps, aps[1:]))


def test_corruption_never_increases_ap(rng):
    for _ in range(200):
        gts, sweep = corruption_sweep(rng)
        for t in (1.0, 2.0, 3.0):
            aps = [detection_ap(p, gts, MapClass.DIVIDER, DistanceFn.CHAMFER, t) for p in sweep]
            assert aps[0] == 1.0
            assert all(b <= a + 1e-12 for a, b in zip(aps, aps[1:]))


def test_top_score_examples():
    gt = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], float)
    ident = [(0, 0), (1, 1), (2, 2)]
    assert top_score(gt, gt, ident, ident) == 1.0
    assert top_score(np.zeros((3, 3)), gt, ident, ident) == 0.0
    half = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], float)
    assert top_score(half, gt, ident, ident) == 0.5
    assert top_score(gt, np.zeros((3, 3)), ident, ident) is None
    # with lane 2 unmatched, edge 1->2 is a false positive and gt edge 1->2 is missed
    assert top_score(gt, gt, [(0, 0), (1, 1)], [(0, 0), (1, 1)]) == pytest.approx(0.5)


def test_uniscore():
    ones = dict(det_l=1, det_a=1, det_t=1, top_ll=1, top_lt=1)
    assert uniscore(ones) == 1.0
    assert uniscore({k: 0 for k in ones}) == 0.0
    assert uniscore(dict(det_l=0.5, det_a=0.5, det_t=0.5, top_ll=0.25, top_lt=0.25)) == pytest.approx(0.5)
    assert uniscore(dict(det_l=0.5, det_a=None, det_t=None, top_ll=0.25, top_lt=None)) == pytest.approx(0.5)
    with pytest.raises(InvalidArgumentError):
        uniscore({k: None for k in ones})


def test_box_iou_and_te_ap():
    assert box_iou((0, 0, 2, 2), (1, 0, 3, 2)) == pytest.approx(1 / 3)
    gt = MapFrame([], [TrafficElement((0, 0, 10, 10), 0), TrafficElement((50, 0, 60, 10), 1)])
    score, table = te_det_score([gt], [gt])
    assert score == 1.0 and len(table) == 4
    wrong_cat = MapFrame([], [TrafficElement((0, 0, 10, 10), 1, 0.5), TrafficElement((50, 0, 60, 10), 1)])
    assert te_det_score([wrong_cat], [gt])[0] == 0.5
    shifted = MapFrame([], [TrafficElement((2, 0, 12, 10), 0), TrafficElement((50, 0, 60, 10), 1)])
    # IoU 8/12 passes 0.5 but not 0.75
    assert te_det_score([shifted], [gt])[0] == pytest.approx(0.75)
    assert te_det_score([MapFrame([])], [MapFrame([])])[0] is None


def _frame(rng):
    lanes = [straight(0, 0, cls=MapClass.LANE_SEGMENT), straight(10, 0, cls=MapClass.LANE_SEGMENT),
             straight(0, 8, cls=MapClass.LANE_SEGMENT)]
    others = [straight(0, 15), line([[0, -15], [5, -16], [12, -15]], MapClass.BOUNDARY),
              MapInstance(MapClass.PED_CROSSING, Polyline([[30, 0], [34, 0], [34, 6], [30, 6]], closed=True))]
    tes = [TrafficElement((700, 300, 730, 360), 1)]
    ll = np.zeros((3, 3))
    ll[0, 1] = 1
    lt = np.array([[0], [1], [0]], float)
    return MapFrame(others[:1] + lanes[:2] + others[1:] + lanes[2:], tes, TopologyGraph(ll, lt))


def test_evaluate_gt_against_itself(rng):
    f = _frame(rng)
    rep = evaluate([f, f], [f, f])
    for v in rep.components().values():
        assert v == 1.0
    assert rep.uniscore == 1.0
    assert set(rep.per_class_ap) == {"lane_segment", "divider", "boundary", "ped_crossing"}


def test_evaluate_without_topology_predictions(rng):
    f = _frame(rng)
    bare = MapFrame(f.instances, f.traffic_elements)
    rep = evaluate([bare], [f])
    assert rep.det_l == 1.0 and rep.top_ll == 0.0 and rep.top_lt == 0.0
    assert rep.uniscore == pytest.approx(3 / 5)


def test_eval_config_validation():
    with pytest.raises(InvalidArgumentError):
        EvalConfig(thresholds=(2.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        EvalConfig(te_iou_thresholds=(0.0,))
    assert EvalConfig().match_threshold == 2.0
    with pytest.raises(InvalidArgumentError):
        EvalReport({}, 1.5, None, None, None, None, None)
