"""Lane-lane and lane-traffic-element topology heads trained on ground truth.

Lanes are embedded from their normalized centerline coordinates and traffic
elements from their box geometry plus a one-hot category. One self-attention
block lets every token see the others; a pairwise classifier then scores the
concatenation ``[token_i; token_j]`` for each ordered lane-lane and lane-TE
pair. Training is plain BCE with positive-class reweighting, backpropagated by
hand through the kernels in :mod:`vmkit.nnkern`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .elements import DEFAULT_OPEN_POINTS, MapClass, MapInstance
from .errors import InvalidArgumentError
from .geom import Polyline
from .nnkern import (
    MlpParams,
    attention_backward,
    attention_with_weights,
    mlp_backward,
    mlp_forward,
    sgd_step,
    sigmoid,
)

TE_CATEGORIES = ("red_light", "green_light", "yellow_light", "sign")
DEFAULT_IMAGE_SIZE = (1600, 900)
# BEV half-extents for x and y, and a fixed scale for z
DEFAULT_COORD_SCALE = (50.0, 25.0, 5.0)


@dataclass(frozen=True)
class TrafficElement:
    bbox: tuple[float, float, float, float]  # u1, v1, u2, v2 in pixels
    category: int
    score: float = 1.0

    def __post_init__(self):
        u1, v1, u2, v2 = (float(v) for v in self.bbox)
        if not (u1 < u2 and v1 < v2) or not all(math.isfinite(v) for v in (u1, v1, u2, v2)):
            raise InvalidArgumentError(f"degenerate traffic-element box {self.bbox}")
        if int(self.category) < 0:
            raise InvalidArgumentError("category must be >= 0")
        if not 0.0 <= float(self.score) <= 1.0:
            raise InvalidArgumentError("score outside [0, 1]")
        object.__setattr__(self, "bbox", (u1, v1, u2, v2))
        object.__setattr__(self, "category", int(self.category))
        object.__setattr__(self, "score", float(self.score))


@dataclass
class TopologyGraph:
    ll_scores: np.ndarray  # (L, L)
    lt_scores: np.ndarray  # (L, T)
    threshold: float = 0.5

    def __post_init__(self):
        self.ll_scores = np.asarray(self.ll_scores, dtype=np.float64)
        self.lt_scores = np.asarray(self.lt_scores, dtype=np.float64)
        n = self.ll_scores.shape[0] if self.ll_scores.ndim == 2 else -1
        if self.ll_scores.shape != (n, n):
            raise InvalidArgumentError("ll scores must be square")
        if self.lt_scores.ndim != 2 or self.lt_scores.shape[0] != n:
            raise InvalidArgumentError("lt scores must have one row per lane")
        for s in (self.ll_scores, self.lt_scores):
            if not np.all(np.isfinite(s)) or np.any((s < 0) | (s > 1)):
                raise InvalidArgumentError("topology scores must be finite and in [0, 1]")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidArgumentError("threshold outside [0, 1]")

    def edges(self) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        return decode_graph(self.ll_scores, self.lt_scores, self.threshold)


@dataclass
class MapFrame:
    """One scene's map: instances, traffic elements and their topology.

    Topology indices count lane-segment instances in the order they appear in
    ``instances`` (see :meth:`lane_indices`) and traffic elements in list order.
    """

    instances: list[MapInstance]
    traffic_elements: list[TrafficElement] = field(default_factory=list)
    topology: Optional[TopologyGraph] = None
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        self.instances = list(self.instances)
        self.traffic_elements = list(self.traffic_elements)
        if self.topology is not None:
            n_l, n_t = len(self.lane_indices()), len(self.traffic_elements)
            if self.topology.ll_scores.shape != (n_l, n_l) or self.topology.lt_scores.shape != (n_l, n_t):
                raise InvalidArgumentError(
                    f"topology shapes {self.topology.ll_scores.shape}/{self.topology.lt_scores.shape} "
                    f"do not fit {n_l} lanes and {n_t} traffic elements")

    def lane_indices(self) -> list[int]:
        return [i for i, inst in enumerate(self.instances) if inst.cls is MapClass.LANE_SEGMENT]

    def lanes(self) -> list[MapInstance]:
        return [self.instances[i] for i in self.lane_indices()]


@dataclass
class TopoHeadParams:
    lane_mlp: MlpParams
    te_mlp: MlpParams
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    ll_mlp: MlpParams
    lt_mlp: MlpParams
    points_per_lane: int = DEFAULT_OPEN_POINTS
    n_te_classes: int = len(TE_CATEGORIES)
    coord_scale: tuple[float, float, float] = DEFAULT_COORD_SCALE

    def __post_init__(self):
        d = self.lane_mlp.dims[-1]
        if self.lane_mlp.dims[0] != 3 * self.points_per_lane:
            raise InvalidArgumentError("lane MLP input must be 3 * points_per_lane")
        if self.te_mlp.dims[0] != 4 + self.n_te_classes or self.te_mlp.dims[-1] != d:
            raise InvalidArgumentError("TE MLP must map 4 + n_te_classes inputs to the lane feature width")
        for w in (self.w_q, self.w_k, self.w_v):
            if w.shape != (d, d):
                raise InvalidArgumentError("attention projections must be (D, D)")
        for m in (self.ll_mlp, self.lt_mlp):
            if m.dims[0] != 2 * d or m.dims[-1] != 1:
                raise InvalidArgumentError("pair classifiers must map 2D inputs to one logit")
        if any(s <= 0 for s in self.coord_scale):
            raise InvalidArgumentError("coordinate scales must be positive")

    @property
    def d_model(self) -> int:
        return self.lane_mlp.dims[-1]

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int = 64, hidden: int = 128,
             points_per_lane: int = DEFAULT_OPEN_POINTS, n_te_classes: int = len(TE_CATEGORIES),
             coord_scale=DEFAULT_COORD_SCALE, zero: bool = False) -> "TopoHeadParams":
        def proj():
            if zero:
                return np.zeros((d_model, d_model))
            return rng.normal(size=(d_model, d_model)) / math.sqrt(d_model)

        return cls(
            lane_mlp=MlpParams.init([3 * points_per_lane, hidden, d_model], rng, zero=zero),
            te_mlp=MlpParams.init([4 + n_te_classes, hidden, d_model], rng, zero=zero),
            w_q=proj(), w_k=proj(), w_v=proj(),
            ll_mlp=MlpParams.init([2 * d_model, hidden, 1], rng, zero=zero),
            lt_mlp=MlpParams.init([2 * d_model, hidden, 1], rng, zero=zero),
            points_per_lane=points_per_lane,
            n_te_classes=n_te_classes,
            coord_scale=tuple(float(s) for s in coord_scale),
        )

    def tensors(self) -> list[np.ndarray]:
        return (self.lane_mlp.tensors() + self.te_mlp.tensors() + [self.w_q, self.w_k, self.w_v]
                + self.ll_mlp.tensors() + self.lt_mlp.tensors())

    def with_tensors(self, tensors: Sequence[np.ndarray]) -> "TopoHeadParams":
        """Same structure, new values (in :meth:`tensors` order)."""
        tensors = list(tensors)
        if len(tensors) != len(self.tensors()):
            raise InvalidArgumentError("tensor count does not match this parameter layout")
        out, i = [], 0
        for mlp in (self.lane_mlp, self.te_mlp):
            n = len(mlp.tensors())
            out.append(MlpParams.from_tensors(tensors[i : i + n]))
            i += n
        wq, wk, wv = tensors[i : i + 3]
        i += 3
        n = len(self.ll_mlp.tensors())
        ll = MlpParams.from_tensors(tensors[i : i + n])
        lt = MlpParams.from_tensors(tensors[i + n :])
        return TopoHeadParams(out[0], out[1], wq, wk, wv, ll, lt, self.points_per_lane, self.n_te_classes,
                              self.coord_scale)

    def copy(self) -> "TopoHeadParams":
        return self.with_tensors([t.copy() for t in self.tensors()])


# -- embeddings ---------------------------------------------------------------


def lane_input(centerline: Polyline, params: TopoHeadParams) -> np.ndarray:
    if len(centerline) != params.points_per_lane:
        raise InvalidArgumentError(f"lane needs {params.points_per_lane} points, got {len(centerline)}")
    return (centerline.points / np.asarray(params.coord_scale)).reshape(-1)


def te_input(te: TrafficElement, params: TopoHeadParams, image_size=DEFAULT_IMAGE_SIZE) -> np.ndarray:
    if te.category >= params.n_te_classes:
        raise InvalidArgumentError(f"category {te.category} >= {params.n_te_classes}")
    w, h = image_size
    u1, v1, u2, v2 = te.bbox
    geo = [(u1 + u2) / 2 / w, (v1 + v2) / 2 / h, (u2 - u1) / w, (v2 - v1) / h]
    onehot = np.zeros(params.n_te_classes)
    onehot[te.category] = 1.0
    return np.concatenate([geo, onehot])


def embed_lane(centerline: Polyline, params: TopoHeadParams) -> np.ndarray:
    return mlp_forward(params.lane_mlp, lane_input(centerline, params)[None])[0][0]


def embed_te(te: TrafficElement, params: TopoHeadParams, image_size=DEFAULT_IMAGE_SIZE) -> np.ndarray:
    return mlp_forward(params.te_mlp, te_input(te, params, image_size)[None])[0][0]


# -- forward / backward on batches of equally sized scenes ----------------------


@dataclass
class _Cache:
    lane_cache: object
    te_cache: Optional[object]
    x: np.ndarray  # (B, N, D) tokens before attention
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    attn: list[np.ndarray]
    y: np.ndarray  # (B, N, D) tokens after attention
    ll_cache: object
    lt_cache: Optional[object]
    n_lanes: int
    n_tes: int


def _pairs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(B, I, D)`` x ``(B, J, D)`` -> ``(B*I*J, 2D)`` rows ``[a_i; b_j]``."""
    bsz, ni, d = a.shape
    nj = b.shape[1]
    left = np.broadcast_to(a[:, :, None, :], (bsz, ni, nj, d))
    right = np.broadcast_to(b[:, None, :, :], (bsz, ni, nj, d))
    return np.concatenate([left, right], axis=-1).reshape(-1, 2 * d)


def _forward_batch(params: TopoHeadParams, lane_x: np.ndarray, te_x: np.ndarray):
    bsz, n_l, _ = lane_x.shape
    n_t = te_x.shape[1]
    d = params.d_model
    el, lane_cache = mlp_forward(params.lane_mlp, lane_x.reshape(bsz * n_l, -1))
    parts = [el.reshape(bsz, n_l, d)]
    te_cache = None
    if n_t:
        et, te_cache = mlp_forward(params.te_mlp, te_x.reshape(bsz * n_t, -1))
        parts.append(et.reshape(bsz, n_t, d))
    x = np.concatenate(parts, axis=1)
    q, k, v = x @ params.w_q, x @ params.w_k, x @ params.w_v
    attended, weights = [], []
    for b in range(bsz):
        o, w = attention_with_weights(q[b], k[b], v[b])
        attended.append(o)
        weights.append(w)
    y = x + np.stack(attended)
    lanes, tes = y[:, :n_l], y[:, n_l:]
    ll, ll_cache = mlp_forward(params.ll_mlp, _pairs(lanes, lanes))
    ll = ll.reshape(bsz, n_l, n_l)
    lt_cache = None
    lt = np.zeros((bsz, n_l, n_t))
    if n_t:
        lt, lt_cache = mlp_forward(params.lt_mlp, _pairs(lanes, tes))
        lt = lt.reshape(bsz, n_l, n_t)
    cache = _Cache(lane_cache, te_cache, x, q, k, v, weights, y, ll_cache, lt_cache, n_l, n_t)
    return ll, lt, cache


def _backward_batch(params: TopoHeadParams, cache: _Cache, d_ll: np.ndarray, d_lt: np.ndarray) -> list[np.ndarray]:
    bsz = cache.x.shape[0]
    n_l, n_t, d = cache.n_lanes, cache.n_tes, params.d_model
    dy = np.zeros_like(cache.y)
    g_ll = mlp_backward(params.ll_mlp, cache.ll_cache, d_ll.reshape(-1, 1))
    dp = g_ll.x.reshape(bsz, n_l, n_l, 2 * d)
    dy[:, :n_l] += dp[..., :d].sum(axis=2) + dp[..., d:].sum(axis=1)
    if n_t:
        g_lt = mlp_backward(params.lt_mlp, cache.lt_cache, d_lt.reshape(-1, 1))
        dp = g_lt.x.reshape(bsz, n_l, n_t, 2 * d)
        dy[:, :n_l] += dp[..., :d].sum(axis=2)
        dy[:, n_l:] += dp[..., d:].sum(axis=1)
        lt_grads = g_lt.tensors()
    else:
        lt_grads = [np.zeros_like(t) for t in params.lt_mlp.tensors()]

    dq, dk, dv = np.zeros_like(cache.q), np.zeros_like(cache.k), np.zeros_like(cache.v)
    for b in range(bsz):
        dq[b], dk[b], dv[b] = attention_backward(cache.q[b], cache.k[b], cache.v[b], cache.attn[b], dy[b])
    x = cache.x
    dwq = np.einsum("bnd,bne->de", x, dq)
    dwk = np.einsum("bnd,bne->de", x, dk)
    dwv = np.einsum("bnd,bne->de", x, dv)
    dx = dy + dq @ params.w_q.T + dk @ params.w_k.T + dv @ params.w_v.T

    lane_grads = mlp_backward(params.lane_mlp, cache.lane_cache, dx[:, :n_l].reshape(bsz * n_l, d)).tensors()
    if n_t:
        te_grads = mlp_backward(params.te_mlp, cache.te_cache, dx[:, n_l:].reshape(bsz * n_t, d)).tensors()
    else:
        te_grads = [np.zeros_like(t) for t in params.te_mlp.tensors()]
    return lane_grads + te_grads + [dwq, dwk, dwv] + g_ll.tensors() + lt_grads


def topo_forward(lanes, tes, params: TopoHeadParams) -> tuple[np.ndarray, np.ndarray]:
    """Logits for one scene from already embedded lane and TE features.

    ``lanes`` is ``(L, D)`` and ``tes`` is ``(T, D)`` (``T`` may be 0).
    Returns ``(ll_logits (L, L), lt_logits (L, T))``.
    """
    lanes = np.asarray(lanes, dtype=np.float64)
    tes = np.asarray(tes, dtype=np.float64).reshape(-1, params.d_model) if np.size(tes) else np.zeros((0, params.d_model))
    if lanes.ndim != 2 or lanes.shape[1] != params.d_model or lanes.shape[0] == 0:
        raise InvalidArgumentError(f"lane features must be (L >= 1, {params.d_model})")
    x = np.concatenate([lanes, tes])[None]
    q, k, v = x @ params.w_q, x @ params.w_k, x @ params.w_v
    y = x + attention_with_weights(q[0], k[0], v[0])[0][None]
    n_l = lanes.shape[0]
    ll = mlp_forward(params.ll_mlp, _pairs(y[:, :n_l], y[:, :n_l]))[0].reshape(n_l, n_l)
    lt = np.zeros((n_l, tes.shape[0]))
    if tes.shape[0]:
        lt = mlp_forward(params.lt_mlp, _pairs(y[:, :n_l], y[:, n_l:]))[0].reshape(n_l, -1)
    return ll, lt


def predict_topology(lanes: Sequence[Polyline], tes: Sequence[TrafficElement], params: TopoHeadParams,
                     image_size=DEFAULT_IMAGE_SIZE, threshold: float = 0.5) -> TopologyGraph:
    n_l, n_t = len(lanes), len(tes)
    if n_l == 0:
        return TopologyGraph(np.zeros((0, 0)), np.zeros((0, n_t)), threshold)
    lx = np.stack([lane_input(p, params) for p in lanes])[None]
    tx = np.stack([te_input(t, params, image_size) for t in tes])[None] if n_t else np.zeros((1, 0, 4 + params.n_te_classes))
    ll, lt, _ = _forward_batch(params, lx, tx)
    ll_s = sigmoid(ll[0])
    np.fill_diagonal(ll_s, 0.0)
    return TopologyGraph(ll_s, sigmoid(lt[0]), threshold)


def decode_graph(ll_scores, lt_scores, threshold: float = 0.5) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Hard edges: ``score >= threshold``, no lane self-loops."""
    ll = np.asarray(ll_scores, dtype=np.float64)
    lt = np.asarray(lt_scores, dtype=np.float64)
    if np.any((ll < 0) | (ll > 1)) or np.any((lt < 0) | (lt > 1)):
        raise InvalidArgumentError("scores must lie in [0, 1]")
    keep = ll >= threshold
    if keep.size:
        np.fill_diagonal(keep, False)
    ll_edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(keep))]
    lt_edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(lt >= threshold))]
    return ll_edges, lt_edges


# -- training -----------------------------------------------------------------


@dataclass
class TopoSample:
    lanes: list[Polyline]
    tes: list[TrafficElement]
    ll: np.ndarray  # (L, L) 0/1, diagonal ignored
    lt: np.ndarray  # (L, T) 0/1
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE

    def __post_init__(self):
        n_l, n_t = len(self.lanes), len(self.tes)
        self.ll = np.asarray(self.ll, dtype=np.float64).reshape(n_l, n_l)
        self.lt = np.asarray(self.lt, dtype=np.float64).reshape(n_l, n_t)
        if n_l == 0:
            raise InvalidArgumentError("a topology sample needs at least one lane")


@dataclass(frozen=True)
class TopoTrainConfig:
    epochs: int = 80
    lr: float = 0.02
    momentum: float = 0.9
    batch_scenes: int = 32
    d_model: int = 64
    hidden: int = 128
    grad_clip: float = 5.0
    seed: int = 0
    time_budget_s: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_scenes < 1 or self.lr <= 0 or not 0 <= self.momentum < 1:
            raise InvalidArgumentError("invalid topology training config")


@dataclass
class TopoBatch:
    lane_x: np.ndarray  # (B, L, 3P)
    te_x: np.ndarray  # (B, T, 4 + K)
    ll: np.ndarray  # (B, L, L)
    lt: np.ndarray  # (B, L, T)


def make_batches(samples: Sequence[TopoSample], params: TopoHeadParams, batch_scenes: int) -> list[TopoBatch]:
    """Group scenes by (lane count, TE count) and stack each group into batches."""
    groups: dict[tuple[int, int], list[TopoSample]] = {}
    for s in samples:
        groups.setdefault((len(s.lanes), len(s.tes)), []).append(s)
    out = []
    for (n_l, n_t), group in sorted(groups.items()):
        for i in range(0, len(group), batch_scenes):
            chunk = group[i : i + batch_scenes]
            lx = np.stack([np.stack([lane_input(p, params) for p in s.lanes]) for s in chunk])
            if n_t:
                tx = np.stack([np.stack([te_input(t, params, s.image_size) for t in s.tes]) for s in chunk])
            else:
                tx = np.zeros((len(chunk), 0, 4 + params.n_te_classes))
            out.append(TopoBatch(lx, tx, np.stack([s.ll for s in chunk]), np.stack([s.lt for s in chunk])))
    return out


def _weighted_bce(logits: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over masked entries with positives weighted by #neg / #pos."""
    n = mask.sum()
    if n == 0:
        return 0.0, np.zeros_like(logits)
    pos = (target * mask).sum()
    neg = n - pos
    w_pos = neg / pos if pos > 0 and neg > 0 else 1.0
    w = np.where(target > 0.5, w_pos, 1.0) * mask
    # log(1 + e^z) computed stably
    sp_pos = np.logaddexp(0.0, -logits)  # -log sigmoid(z)
    sp_neg = np.logaddexp(0.0, logits)  # -log(1 - sigmoid(z))
    loss = (w * np.where(target > 0.5, sp_pos, sp_neg)).sum() / n
    grad = w * (sigmoid(logits) - target) / n
    return float(loss), grad


def topo_loss_and_grads(params: TopoHeadParams, batch: TopoBatch) -> tuple[float, list[np.ndarray]]:
    """Total loss (lane-lane plus lane-TE BCE) and gradients in ``params.tensors()`` order."""
    ll, lt, cache = _forward_batch(params, batch.lane_x, batch.te_x)
    n_l = ll.shape[1]
    mask = np.broadcast_to(~np.eye(n_l, dtype=bool), ll.shape).astype(np.float64)
    l1, g1 = _weighted_bce(ll, batch.ll, mask)
    l2, g2 = _weighted_bce(lt, batch.lt, np.ones_like(lt))
    return l1 + l2, _backward_batch(params, cache, g1, g2)


@dataclass
class TrainResult:
    params: TopoHeadParams
    loss_curve: list[float] = field(default_factory=list)
    epochs_run: int = 0


def train_topo(samples: Sequence[TopoSample], config: TopoTrainConfig = TopoTrainConfig(),
               params: Optional[TopoHeadParams] = None) -> TrainResult:
    """Momentum SGD over shuffled scene batches; returns params and per-epoch mean loss."""
    if not samples:
        raise InvalidArgumentError("training needs at least one sample")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = TopoHeadParams.init(rng, d_model=config.d_model, hidden=config.hidden,
                                     points_per_lane=len(samples[0].lanes[0]))
    batches = make_batches(samples, params, config.batch_scenes)
    tensors = [t.copy() for t in params.tensors()]
    velocity = None
    curve = []
    start = time.perf_counter()
    epochs_run = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(batches))
        total = 0.0
        for bi in order:
            cur = params.with_tensors(tensors)
            loss, grads = topo_loss_and_grads(cur, batches[bi])
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
            if norm > config.grad_clip:
                grads = [g * (config.grad_clip / norm) for g in grads]
            tensors, velocity = sgd_step(tensors, grads, config.lr, config.momentum, velocity)
            total += loss
        curve.append(total / len(batches))
        epochs_run += 1
        if config.time_budget_s is not None and time.perf_counter() - start > config.time_budget_s:
            break
    return TrainResult(params.with_tensors(tensors), curve, epochs_run)


def pair_accuracy(samples: Sequence[TopoSample], params: TopoHeadParams, threshold: float = 0.5) -> dict:
    """Fraction of correctly decided pairs: off-diagonal lane pairs, lane-TE pairs, and both together."""
    hit_ll = n_ll = hit_lt = n_lt = 0
    for s in samples:
        g = predict_topology(s.lanes, s.tes, params, s.image_size, threshold)
        off = ~np.eye(len(s.lanes), dtype=bool)
        hit_ll += int(((g.ll_scores >= threshold) == (s.ll > 0.5))[off].sum())
        n_ll += int(off.sum())
        hit_lt += int(((g.lt_scores >= threshold) == (s.lt > 0.5)).sum())
        n_lt += s.lt.size
    total = n_ll + n_lt
    return {
        "ll": hit_ll / n_ll if n_ll else None,
        "lt": hit_lt / n_lt if n_lt else None,
        "all": (hit_ll + hit_lt) / total if total else None,
    }


def sample_to_frame(sample: TopoSample, graph: Optional[TopologyGraph] = None) -> MapFrame:
    """A lanes-only map frame; topology is ``graph`` or the sample's labels."""
    lanes = [MapInstance(MapClass.LANE_SEGMENT, p) for p in sample.lanes]
    return MapFrame(lanes, sample.tes, graph or TopologyGraph(sample.ll, sample.lt), sample.image_size)


def frame_to_sample(frame: MapFrame) -> TopoSample:
    if frame.topology is None:
        raise InvalidArgumentError("frame has no ground-truth topology")
    labels = [(frame.topology.ll_scores >= 0.5), (frame.topology.lt_scores >= 0.5)]
    return TopoSample([i.geometry for i in frame.lanes()], frame.traffic_elements, labels[0].astype(float),
                      labels[1].astype(float), frame.image_size)
