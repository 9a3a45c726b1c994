"""Detection and topology metrics over sets of map frames.

Detection AP matches predictions greedily in descending score order, each to
its nearest still-unmatched ground truth within a distance threshold, and
integrates the precision envelope over recall. Topology AP scores predicted
edges after projecting them onto the instance matching.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .elements import MapClass, MapInstance
from .errors import InvalidArgumentError
from .geom import Polyline
from .topo import MapFrame, TrafficElement


class DistanceFn(str, enum.Enum):
    CHAMFER = "chamfer"
    FRECHET = "frechet"


def _pts(p) -> np.ndarray:
    if isinstance(p, MapInstance):
        return p.points
    if isinstance(p, Polyline):
        return p.points
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 2 or len(a) == 0:
        raise InvalidArgumentError("need a non-empty (N, D) point set")
    return a


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def chamfer(a, b) -> float:
    """Mean of the two directed mean nearest-point distances."""
    d = _pairwise(_pts(a), _pts(b))
    return float(0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean()))


def discrete_frechet(a, b) -> float:
    """Discrete Fréchet distance by dynamic programming over point couplings."""
    d = _pairwise(_pts(a), _pts(b))
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        for j in range(1, m):
            ca[i, j] = max(min(ca[i - 1, j], ca[i - 1, j - 1], ca[i, j - 1]), d[i, j])
    return float(ca[-1, -1])


DISTANCES: dict[DistanceFn, Callable] = {DistanceFn.CHAMFER: chamfer, DistanceFn.FRECHET: discrete_frechet}


# -- AP machinery -------------------------------------------------------------


def average_precision(scores: Sequence[float], is_tp: Sequence[bool], n_pos: int) -> tuple[float, np.ndarray, np.ndarray]:
    """All-points interpolated AP. Returns ``(ap, recall, precision)``.

    ``scores``/``is_tp`` must already be in ranking order.
    """
    if n_pos <= 0:
        raise InvalidArgumentError("AP needs at least one positive")
    tp = np.asarray(is_tp, dtype=np.float64)
    if tp.size == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_pos
    precision = ctp / (ctp + cfp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall steps by 1/n_pos at each true positive; summing there keeps a perfect ranking at exactly 1.0
    ap = float(envelope[tp > 0].sum() / n_pos)
    return min(max(ap, 0.0), 1.0), recall, precision


def _rank(scores: Sequence[float], keys: Sequence) -> list[int]:
    """Descending score; ties broken by a content key so input order never matters."""
    return sorted(range(len(scores)), key=lambda i: (-scores[i], keys[i]))


def greedy_match(preds: Sequence[MapInstance], gts: Sequence[MapInstance], distance, threshold: float
                 ) -> tuple[list[tuple[int, int]], list[bool]]:
    """Match one scene. Returns ``(pairs, tp_flag per pred)``; pairs are ``(pred, gt)``."""
    fn = DISTANCES[DistanceFn(distance)]
    flags = [False] * len(preds)
    pairs = []
    if not gts:
        return pairs, flags
    taken = np.zeros(len(gts), dtype=bool)
    order = _rank([p.score for p in preds], [p.points.tobytes() for p in preds])
    for i in order:
        best, best_j = math.inf, -1
        for j, g in enumerate(gts):
            if taken[j]:
                continue
            d = fn(preds[i], g)
            if d < best:
                best, best_j = d, j
        if best_j >= 0 and best <= threshold:
            taken[best_j] = True
            flags[i] = True
            pairs.append((i, best_j))
    return pairs, flags


def _scenes(x) -> list[list]:
    """Accept one scene (a flat list) or a list of scenes."""
    x = list(x)
    if x and isinstance(x[0], MapFrame):
        return [f.instances for f in x]
    if not x or isinstance(x[0], (MapInstance, TrafficElement)):
        return [x]
    return [list(s.instances) if isinstance(s, MapFrame) else list(s) for s in x]


def _detection(pred_scenes, gt_scenes, cls: MapClass, distance, threshold: float):
    pred_scenes, gt_scenes = _scenes(pred_scenes), _scenes(gt_scenes)
    if len(pred_scenes) != len(gt_scenes):
        raise InvalidArgumentError("prediction and ground-truth scene counts differ")
    cls = MapClass(cls)
    scores, flags, keys = [], [], []
    n_pos = 0
    for si, (ps, gs) in enumerate(zip(pred_scenes, gt_scenes)):
        ps = [p for p in ps if p.cls is cls]
        gs = [g for g in gs if g.cls is cls]
        n_pos += len(gs)
        _, f = greedy_match(ps, gs, distance, threshold)
        scores += [p.score for p in ps]
        flags += f
        keys += [(si, p.points.tobytes()) for p in ps]
    if n_pos == 0:
        return None
    order = _rank(scores, keys)
    return average_precision([scores[i] for i in order], [flags[i] for i in order], n_pos)


def detection_ap(preds, gts, cls: MapClass, distance_fn=DistanceFn.CHAMFER, threshold: float = 1.0) -> Optional[float]:
    """AP for one class at one distance threshold; ``None`` when the class has no ground truth."""
    if threshold <= 0:
        raise InvalidArgumentError("threshold must be positive")
    res = _detection(preds, gts, cls, distance_fn, threshold)
    return None if res is None else res[0]


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = (1.0, 2.0, 3.0)
    distance: dict = field(default_factory=lambda: {
        c: (DistanceFn.FRECHET if c is MapClass.LANE_SEGMENT else DistanceFn.CHAMFER) for c in MapClass})
    te_iou_thresholds: tuple[float, ...] = (0.5, 0.75)
    topology_threshold: float = 0.5
    uniscore_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        t = tuple(float(v) for v in self.thresholds)
        if not t or t[0] <= 0 or any(b <= a for a, b in zip(t, t[1:])):
            raise InvalidArgumentError("thresholds must be positive and ascending")
        object.__setattr__(self, "thresholds", t)
        iou = tuple(float(v) for v in self.te_iou_thresholds)
        if not iou or any(not 0 < v <= 1 for v in iou) or any(b <= a for a, b in zip(iou, iou[1:])):
            raise InvalidArgumentError("IoU thresholds must lie in (0, 1] and ascend")
        object.__setattr__(self, "te_iou_thresholds", iou)
        object.__setattr__(self, "distance", {MapClass(k): DistanceFn(v) for k, v in dict(self.distance).items()})
        if len(self.uniscore_weights) != 5 or any(w < 0 for w in self.uniscore_weights):
            raise InvalidArgumentError("uniscore needs five non-negative weights")
        if not 0.0 <= self.topology_threshold <= 1.0:
            raise InvalidArgumentError("topology threshold outside [0, 1]")

    @property
    def match_threshold(self) -> float:
        """Distance used for the instance matching behind topology scores (the middle threshold)."""
        return self.thresholds[len(self.thresholds) // 2]

    def distance_for(self, cls: MapClass) -> DistanceFn:
        return self.distance.get(MapClass(cls), DistanceFn.CHAMFER)


def det_score(preds, gts, cls: MapClass, cfg: EvalConfig = EvalConfig()) -> Optional[float]:
    """Mean AP over the configured thresholds, or ``None`` for an absent class."""
    aps = [detection_ap(preds, gts, cls, cfg.distance_for(cls), t) for t in cfg.thresholds]
    if aps[0] is None:
        return None
    return float(np.mean(aps))


# -- traffic elements ---------------------------------------------------------


def box_iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def greedy_match_boxes(preds: Sequence[TrafficElement], gts: Sequence[TrafficElement], iou_threshold: float
                       ) -> tuple[list[tuple[int, int]], list[bool]]:
    """Same-category greedy matching on IoU, highest score first."""
    flags = [False] * len(preds)
    pairs = []
    taken = np.zeros(len(gts), dtype=bool)
    for i in _rank([p.score for p in preds], [p.bbox for p in preds]):
        best, best_j = -1.0, -1
        for j, g in enumerate(gts):
            if taken[j] or g.category != preds[i].category:
                continue
            iou = box_iou(preds[i].bbox, g.bbox)
            if iou > best:
                best, best_j = iou, j
        if best_j >= 0 and best >= iou_threshold:
            taken[best_j] = True
            flags[i] = True
            pairs.append((i, best_j))
    return pairs, flags


def te_det_score(pred_frames: Sequence[MapFrame], gt_frames: Sequence[MapFrame], cfg: EvalConfig = EvalConfig()
                 ) -> tuple[Optional[float], dict]:
    """Mean over categories and IoU thresholds of box AP. Returns ``(score, per-(category, iou) AP)``."""
    cats = sorted({t.category for f in gt_frames for t in f.traffic_elements})
    if not cats:
        return None, {}
    table = {}
    for c in cats:
        for thr in cfg.te_iou_thresholds:
            scores, flags, keys = [], [], []
            n_pos = 0
            for si, (pf, gf) in enumerate(zip(pred_frames, gt_frames)):
                ps = [t for t in pf.traffic_elements if t.category == c]
                gs = [t for t in gf.traffic_elements if t.category == c]
                n_pos += len(gs)
                _, fl = greedy_match_boxes(ps, gs, thr)
                scores += [p.score for p in ps]
                flags += fl
                keys += [(si, p.bbox) for p in ps]
            order = _rank(scores, keys)
            table[(c, thr)] = average_precision([scores[i] for i in order], [flags[i] for i in order], n_pos)[0]
    return float(np.mean(list(table.values()))), table


# -- topology -----------------------------------------------------------------


def top_score(pred_scores, gt_adjacency, row_pairs: Sequence[tuple[int, int]], col_pairs: Sequence[tuple[int, int]],
              square: bool = True) -> Optional[float]:
    """AP of predicted edge scores against ground-truth edges through an instance matching.

    ``row_pairs``/``col_pairs`` map predicted row/column instances to ground
    truth ones. Predicted edges touching unmatched instances are false
    positives; ground-truth edges nobody predicts are missed. Only edges with
    positive score count as predictions. ``None`` when there is no gt edge.
    """
    res = _top_records([(pred_scores, gt_adjacency, row_pairs, col_pairs)], square)
    return None if res is None else res[0]


def _top_records(items, square: bool):
    scores, flags, keys = [], [], []
    n_pos = 0
    for si, (ps, ga, rp, cp) in enumerate(items):
        ps = np.asarray(ps, dtype=np.float64)
        ga = np.asarray(ga, dtype=np.float64) > 0.5
        if square:
            ga = ga & ~np.eye(ga.shape[0], dtype=bool) if ga.size else ga
        n_pos += int(ga.sum())
        rmap, cmap = dict(rp), dict(cp)
        for i in range(ps.shape[0]):
            for j in range(ps.shape[1]):
                if square and i == j:
                    continue
                s = float(ps[i, j])
                if s <= 0:
                    continue
                gi, gj = rmap.get(i), cmap.get(j)
                hit = gi is not None and gj is not None and bool(ga[gi, gj])
                scores.append(s)
                flags.append(hit)
                keys.append((si, i, j))
    if n_pos == 0:
        return None
    order = _rank(scores, keys)
    return average_precision([scores[i] for i in order], [flags[i] for i in order], n_pos)


def uniscore(components: dict, weights: Sequence[float] = (1.0, 1.0, 1.0, 1.0, 1.0)) -> float:
    """Weighted mean of DET_l, DET_a, DET_t, sqrt(TOP_ll), sqrt(TOP_lt); absent parts drop out."""
    names = ("det_l", "det_a", "det_t", "top_ll", "top_lt")
    vals, ws = [], []
    for name, w in zip(names, weights):
        v = components.get(name)
        if v is None:
            continue
        if not 0.0 <= v <= 1.0:
            raise InvalidArgumentError(f"{name}={v} outside [0, 1]")
        vals.append(math.sqrt(v) if name.startswith("top") else v)
        ws.append(w)
    if not vals or sum(ws) == 0:
        raise InvalidArgumentError("no metric component present")
    return float(np.dot(vals, ws) / sum(ws))


# -- full report --------------------------------------------------------------


@dataclass
class EvalReport:
    per_class_ap: dict  # class value -> {threshold: AP}
    det_l: Optional[float]
    det_a: Optional[float]
    det_t: Optional[float]
    top_ll: Optional[float]
    top_lt: Optional[float]
    uniscore: Optional[float]
    pr_curves: dict = field(default_factory=dict)  # "class@thr" -> (recall, precision)
    te_ap: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("det_l", "det_a", "det_t", "top_ll", "top_lt", "uniscore"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name}={v} outside [0, 1]")

    def components(self) -> dict:
        return {k: getattr(self, k) for k in ("det_l", "det_a", "det_t", "top_ll", "top_lt")}


def evaluate(pred_frames: Sequence[MapFrame], gt_frames: Sequence[MapFrame], cfg: EvalConfig = EvalConfig()) -> EvalReport:
    pred_frames, gt_frames = list(pred_frames), list(gt_frames)
    if len(pred_frames) != len(gt_frames):
        raise InvalidArgumentError("prediction and ground-truth frame counts differ")
    per_class, curves, det = {}, {}, {}
    for cls in MapClass:
        row = {}
        for t in cfg.thresholds:
            res = _detection(pred_frames, gt_frames, cls, cfg.distance_for(cls), t)
            if res is None:
                break
            row[t] = res[0]
            curves[f"{cls.value}@{t:g}"] = (res[1], res[2])
        if row:
            per_class[cls.value] = row
            det[cls] = float(np.mean(list(row.values())))
    det_l = det.get(MapClass.LANE_SEGMENT)
    area = [v for c, v in det.items() if c is not MapClass.LANE_SEGMENT]
    det_a = float(np.mean(area)) if area else None
    det_t, te_table = te_det_score(pred_frames, gt_frames, cfg)

    ll_items, lt_items = [], []
    lane_dist = cfg.distance_for(MapClass.LANE_SEGMENT)
    for pf, gf in zip(pred_frames, gt_frames):
        if gf.topology is None:
            continue
        p_lanes, g_lanes = pf.lanes(), gf.lanes()
        lane_pairs, _ = greedy_match(p_lanes, g_lanes, lane_dist, cfg.match_threshold)
        te_pairs, _ = greedy_match_boxes(pf.traffic_elements, gf.traffic_elements, cfg.te_iou_thresholds[0])
        if pf.topology is not None:
            pll, plt = pf.topology.ll_scores, pf.topology.lt_scores
        else:
            pll, plt = np.zeros((len(p_lanes), len(p_lanes))), np.zeros((len(p_lanes), len(pf.traffic_elements)))
        ll_items.append((pll, gf.topology.ll_scores, lane_pairs, lane_pairs))
        lt_items.append((plt, gf.topology.lt_scores, lane_pairs, te_pairs))
    top_ll = _top_records(ll_items, True) if ll_items else None
    top_lt = _top_records(lt_items, False) if lt_items else None
    if top_ll is not None:
        curves["top_ll"] = (top_ll[1], top_ll[2])
    if top_lt is not None:
        curves["top_lt"] = (top_lt[1], top_lt[2])
    comps = {"det_l": det_l, "det_a": det_a, "det_t": det_t,
             "top_ll": None if top_ll is None else top_ll[0], "top_lt": None if top_lt is None else top_lt[0]}
    try:
        us = uniscore(comps, cfg.uniscore_weights)
    except InvalidArgumentError:
        us = None
    return EvalReport(per_class, det_l, det_a, det_t, comps["top_ll"], comps["top_lt"], us, curves,
                      {f"{c}@{t:g}": v for (c, t), v in te_table.items()})
