"""Set matching between predicted and ground-truth instances, plus training losses.

The losses here are evaluated forward only. They serve target generation,
diagnostics and evaluation; nothing backpropagates through them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import binary_dilation
from scipy.optimize import linear_sum_assignment
from scipy.special import xlogy

from .elements import MapClass, MapInstance, equivalent_permutations
from .errors import DegenerateGeometryError, InvalidArgumentError
from .svt import BevGridSpec, DepthBins, DepthMap, depth_to_bins

_EDGE_EPS = 1e-12


@dataclass(frozen=True)
class CostWeights:
    lam_cls: float = 2.0
    lam_pts: float = 5.0

    def __post_init__(self):
        if self.lam_cls < 0 or self.lam_pts < 0 or not (math.isfinite(self.lam_cls) and math.isfinite(self.lam_pts)):
            raise InvalidArgumentError("cost weights must be finite and >= 0")
        if self.lam_cls == 0 and self.lam_pts == 0:
            raise InvalidArgumentError("cost weights cannot both be zero")


@dataclass
class Assignment:
    pairs: list[tuple[int, int]]
    n_pred: int
    n_gt: int
    cost: float = 0.0
    unmatched_preds: list[int] = field(init=False)
    unmatched_gts: list[int] = field(init=False)

    def __post_init__(self):
        self.pairs = sorted((int(p), int(g)) for p, g in self.pairs)
        ps = [p for p, _ in self.pairs]
        gs = [g for _, g in self.pairs]
        if len(set(ps)) != len(ps) or len(set(gs)) != len(gs):
            raise InvalidArgumentError("assignment must be one-to-one")
        if any(not 0 <= p < self.n_pred for p in ps) or any(not 0 <= g < self.n_gt for g in gs):
            raise InvalidArgumentError("assignment index out of range")
        self.unmatched_preds = sorted(set(range(self.n_pred)) - set(ps))
        self.unmatched_gts = sorted(set(range(self.n_gt)) - set(gs))

    def gt_of(self, pred: int) -> Optional[int]:
        for p, g in self.pairs:
            if p == pred:
                return g
        return None


def hungarian(cost) -> Assignment:
    """Minimum-cost one-to-one assignment of ``min(P, G)`` pairs."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InvalidArgumentError("cost must be a 2-D matrix")
    p, g = cost.shape
    if p == 0 or g == 0:
        return Assignment([], p, g, 0.0)
    if not np.all(np.isfinite(cost)):
        raise InvalidArgumentError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    return Assignment(list(zip(rows.tolist(), cols.tolist())), p, g, float(cost[rows, cols].sum()))


# -- instance losses ----------------------------------------------------------


def _check_pair(pred: MapInstance, gt: MapInstance) -> None:
    if pred.cls is not gt.cls:
        raise InvalidArgumentError(f"class mismatch: {pred.cls.value} vs {gt.cls.value}")
    if len(pred.geometry) != len(gt.geometry):
        raise InvalidArgumentError(f"point count mismatch: {len(pred.geometry)} vs {len(gt.geometry)}")


def _check_perm(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or sorted(perm.tolist()) != list(range(n)):
        raise InvalidArgumentError("permutation must reorder every point exactly once")
    return perm


def point2point_loss(pred: MapInstance, gt: MapInstance) -> tuple[float, np.ndarray]:
    """Mean per-point L1 distance, minimized over the GT's equivalent orderings.

    Returns the loss and the GT ordering that achieves it.
    """
    _check_pair(pred, gt)
    p = pred.points
    best, best_perm = math.inf, None
    for perm in equivalent_permutations(gt):
        val = float(np.abs(p - gt.points[perm]).sum(axis=1).mean())
        if val < best:
            best, best_perm = val, perm
    return best, best_perm


def _edges(points: np.ndarray, closed: bool) -> np.ndarray:
    e = np.diff(points, axis=0)
    if closed:
        e = np.vstack([e, points[:1] - points[-1:]])
    return e


def edge_direction_loss(pred: MapInstance, gt: MapInstance, perm) -> float:
    """Mean ``1 - cos`` between predicted and matched GT edge vectors."""
    _check_pair(pred, gt)
    perm = _check_perm(perm, len(gt.geometry))
    ep = _edges(pred.points, pred.geometry.closed)
    eg = _edges(gt.points[perm], gt.geometry.closed)
    np_, ng = np.linalg.norm(ep, axis=1), np.linalg.norm(eg, axis=1)
    ok = (np_ > _EDGE_EPS) & (ng > _EDGE_EPS)
    if not ok.any():
        raise DegenerateGeometryError("every edge pair has a zero-length edge")
    cos = np.einsum("ij,ij->i", ep[ok], eg[ok]) / (np_[ok] * ng[ok])
    return float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))


def geometric3d_loss(pred: MapInstance, gt: MapInstance, perm, dims: int = 3) -> float:
    """Mean distance between corresponding edge displacement vectors.

    Each edge contributes the Euclidean length of ``e_pred - e_gt`` (an
    absolute, not squared, error), so the value ignores common translation and
    common rotation. ``dims=2`` drops z for comparison.
    """
    _check_pair(pred, gt)
    if len(pred.geometry) < 2:
        raise InvalidArgumentError("need at least 2 points")
    if dims not in (2, 3):
        raise InvalidArgumentError("dims must be 2 or 3")
    perm = _check_perm(perm, len(gt.geometry))
    ep = _edges(pred.points, pred.geometry.closed)[:, :dims]
    eg = _edges(gt.points[perm], gt.geometry.closed)[:, :dims]
    return float(np.linalg.norm(ep - eg, axis=1).mean())


# -- dense losses -------------------------------------------------------------


def focal_loss(scores, labels, gamma: float = 2.0, alpha: float = 0.25) -> float:
    """Sigmoid focal loss summed over classes, averaged over instances.

    ``labels[i] = -1`` marks a background instance (every class is a negative).
    """
    p = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if p.ndim != 2 or labels.shape != (p.shape[0],):
        raise InvalidArgumentError("scores must be (N, K) and labels (N,)")
    if not np.all((p >= 0) & (p <= 1)):
        raise InvalidArgumentError("scores must be probabilities in [0, 1]")
    if np.any((labels < -1) | (labels >= p.shape[1])):
        raise InvalidArgumentError("label out of range")
    if p.shape[0] == 0:
        return 0.0
    t = np.zeros_like(p)
    pos = labels >= 0
    t[np.nonzero(pos)[0], labels[pos]] = 1.0
    with np.errstate(divide="ignore"):
        pos_term = -xlogy(alpha * t * (1 - p) ** gamma, p)
        neg_term = -xlogy((1 - alpha) * (1 - t) * p**gamma, 1 - p)
    return float((pos_term + neg_term).sum() / p.shape[0])


def depth_ce_loss(pred_dist, target: DepthMap, bins: DepthBins, eps: float = 1e-12) -> tuple[float, int]:
    """Cross-entropy of the per-pixel depth distribution at lidar-covered pixels.

    Returns ``(loss, n_valid)``; the loss is 0 when no pixel has usable depth.
    """
    dist = np.asarray(pred_dist, dtype=np.float64)
    depth = np.asarray(target.depth, dtype=np.float64)
    if dist.ndim != 3 or dist.shape[0] != bins.count or dist.shape[1:] != depth.shape:
        raise InvalidArgumentError(f"depth distribution {dist.shape} does not match {bins.count} bins x {depth.shape}")
    if not np.allclose(dist.sum(axis=0), 1.0, atol=1e-4):
        raise InvalidArgumentError("depth distributions must sum to 1 per pixel")
    idx, ok = depth_to_bins(depth, bins)
    ok &= depth > 0
    n = int(ok.sum())
    if n == 0:
        return 0.0, 0
    r, c = np.nonzero(ok)
    prob = dist[idx[ok], r, c]
    return float(-np.log(np.maximum(prob, eps)).mean()), n


# -- rasterization ------------------------------------------------------------


def _clip_segment(a, b, w: float, h: float) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Liang-Barsky clip of segment a->b to the box [0, w] x [0, h]."""
    d = b - a
    t0, t1 = 0.0, 1.0
    for p, q in ((-d[0], a[0]), (d[0], w - a[0]), (-d[1], a[1]), (d[1], h - a[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return a + t0 * d, a + t1 * d


def _traverse(a, b, rows: int, cols: int) -> list[tuple[int, int]]:
    """Cells crossed by a segment in cell units (grid-walk, Amanatides-Woo)."""
    clipped = _clip_segment(np.asarray(a, float), np.asarray(b, float), cols, rows)
    if clipped is None:
        return []
    a, b = clipped
    c, r = min(int(math.floor(a[0])), cols - 1), min(int(math.floor(a[1])), rows - 1)
    d = b - a
    step_c, step_r = (1 if d[0] > 0 else -1), (1 if d[1] > 0 else -1)

    def first_crossing(pos, cell, delta, step):
        if delta == 0:
            return math.inf
        return (cell + (1 if step > 0 else 0) - pos) / delta

    t_c, t_r = first_crossing(a[0], c, d[0], step_c), first_crossing(a[1], r, d[1], step_r)
    dt_c = abs(1.0 / d[0]) if d[0] != 0 else math.inf
    dt_r = abs(1.0 / d[1]) if d[1] != 0 else math.inf
    cells = [(r, c)]
    while min(t_c, t_r) < 1.0:
        if t_c < t_r:
            c += step_c
            t_c += dt_c
        else:
            r += step_r
            t_r += dt_r
        if not (0 <= r < rows and 0 <= c < cols):
            break
        cells.append((r, c))
    return cells


def _even_odd_fill(poly_xy: np.ndarray, spec: BevGridSpec) -> np.ndarray:
    """Cells whose centre is inside the polygon under the even-odd rule."""
    xs, ys = spec.cell_centers()
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(poly_xy)
    for i in range(n):
        x1, y1 = poly_xy[i]
        x2, y2 = poly_xy[(i + 1) % n]
        if y1 == y2:
            continue
        crosses = (y1 > ys) != (y2 > ys)
        x_at = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (xs < x_at)
    return inside


def rasterize(instances: Sequence[MapInstance], spec: BevGridSpec, thickness: int = 1) -> np.ndarray:
    """Per-class binary masks ``(len(MapClass), rows, cols)``, uint8.

    Lines are walked cell by cell, then dilated with a square of radius
    ``thickness - 1``, so ``thickness=1`` gives a one-cell-wide line. Ped
    crossings are also filled (even-odd on cell centres).
    """
    if thickness < 1:
        raise InvalidArgumentError("thickness must be >= 1")
    out = np.zeros((len(MapClass), spec.rows, spec.cols), dtype=bool)
    for inst in instances:
        pts = inst.points[:, :2]
        gx = (pts[:, 0] - spec.x_range[0]) / spec.dx
        gy = (pts[:, 1] - spec.y_range[0]) / spec.dy
        g = np.stack([gx, gy], axis=1)
        ch = out[inst.cls.index]
        line = np.zeros_like(ch)
        n = len(g)
        seg_count = n if inst.geometry.closed else n - 1
        for i in range(seg_count):
            for r, c in _traverse(g[i], g[(i + 1) % n], spec.rows, spec.cols):
                line[r, c] = True
        if thickness > 1:
            k = 2 * thickness - 1
            line = binary_dilation(line, structure=np.ones((k, k), dtype=bool))
        ch |= line
        if inst.geometry.closed:
            ch |= _even_odd_fill(pts, spec)
    return out.astype(np.uint8)


def seg_loss_terms(pred_mask, gt_mask, smooth: float = 1.0) -> tuple[float, float]:
    """``(dice, bce)`` for a probability mask against a binary mask."""
    p = np.asarray(pred_mask, dtype=np.float64)
    g = np.asarray(gt_mask, dtype=np.float64)
    if p.shape != g.shape:
        raise InvalidArgumentError(f"mask shapes differ: {p.shape} vs {g.shape}")
    if not np.all((p >= 0) & (p <= 1)):
        raise InvalidArgumentError("predicted mask must hold probabilities")
    if not np.all((g == 0) | (g == 1)):
        raise InvalidArgumentError("target mask must be binary")
    if p.size == 0:
        return 0.0, 0.0
    dice = 1.0 - (2.0 * (p * g).sum() + smooth) / (p.sum() + g.sum() + smooth)
    with np.errstate(divide="ignore"):
        bce = -(xlogy(g, p) + xlogy(1 - g, 1 - p)).mean()
    return float(dice), float(bce)


def seg_loss(pred_mask, gt_mask) -> float:
    """Dice plus binary cross-entropy, equally weighted."""
    dice, bce = seg_loss_terms(pred_mask, gt_mask)
    return dice + bce


# -- set matching -------------------------------------------------------------


def match_cost(pred: MapInstance, gt: MapInstance, weights: CostWeights) -> float:
    if pred.cls is not gt.cls:
        return math.inf
    return weights.lam_cls * (1.0 - pred.score) + weights.lam_pts * point2point_loss(pred, gt)[0]


def match_instances(preds: Sequence[MapInstance], gts: Sequence[MapInstance],
                    weights: CostWeights = CostWeights()) -> Assignment:
    """Hungarian matching with cross-class pairs forbidden.

    The cost matrix is block diagonal by class, so each class is solved on
    its own and the results are merged.
    """
    pairs: list[tuple[int, int]] = []
    total = 0.0
    for cls in MapClass:
        pi = [i for i, p in enumerate(preds) if p.cls is cls]
        gi = [j for j, g in enumerate(gts) if g.cls is cls]
        if not pi or not gi:
            continue
        cost = np.array([[match_cost(preds[i], gts[j], weights) for j in gi] for i in pi])
        sub = hungarian(cost)
        pairs.extend((pi[a], gi[b]) for a, b in sub.pairs)
        total += sub.cost
    return Assignment(pairs, len(preds), len(gts), total)
