"""Small deterministic neural kernels with hand-written backprop.

Everything is plain numpy. Reductions accumulate in float64 and results are
cast back to the inputs' dtype, so float32 rasters stay float32 while the
topology heads (float64 parameters) keep full precision for gradient checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


def _out_dtype(*arrays) -> np.dtype:
    dt = np.result_type(*arrays)
    return dt if np.issubdtype(dt, np.floating) else np.dtype(np.float64)


def _f64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def dense(x, w, b) -> np.ndarray:
    x, w, b = np.asarray(x), np.asarray(w), np.asarray(b)
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1 or x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise InvalidArgumentError(f"dense shape mismatch: x{x.shape} w{w.shape} b{b.shape}")
    return (_f64(x) @ _f64(w) + _f64(b)).astype(_out_dtype(x, w, b))


def relu(x):
    return np.maximum(x, 0)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=_out_dtype(x))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    z = _f64(x)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=axis, keepdims=True)).astype(_out_dtype(x))


def attention(q, k, v) -> np.ndarray:
    """Single-head scaled dot-product attention, ``softmax(q kᵀ / √d) v``."""
    return attention_with_weights(q, k, v)[0]


def attention_with_weights(q, k, v) -> tuple[np.ndarray, np.ndarray]:
    q, k, v = np.asarray(q), np.asarray(k), np.asarray(v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2 or q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise InvalidArgumentError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    scores = _f64(q) @ _f64(k).T / math.sqrt(q.shape[1])
    weights = softmax(scores, axis=-1)
    return (weights @ _f64(v)).astype(_out_dtype(q, k, v)), weights


def attention_backward(q, k, v, weights, dout) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`attention` w.r.t. ``q``, ``k`` and ``v``."""
    q, k, v, dout = _f64(q), _f64(k), _f64(v), _f64(dout)
    scale = 1.0 / math.sqrt(q.shape[1])
    dv = weights.T @ dout
    dw = dout @ v.T
    ds = weights * (dw - (dw * weights).sum(axis=1, keepdims=True))
    dq = ds @ k * scale
    dk = ds.T @ q * scale
    return dq, dk, dv


# -- MLP ---------------------------------------------------------------------


@dataclass
class MlpParams:
    """Dense layers with ReLU between them and raw logits at the output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise InvalidArgumentError("MLP needs matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise InvalidArgumentError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise InvalidArgumentError(f"layer {i} input {w.shape[0]} != previous output")

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @classmethod
    def init(cls, dims, rng: np.random.Generator, dtype=np.float64, zero: bool = False) -> "MlpParams":
        ws, bs = [], []
        for din, dout in zip(dims[:-1], dims[1:]):
            if zero:
                ws.append(np.zeros((din, dout), dtype=dtype))
            else:
                # He init for the ReLU stack
                ws.append((rng.normal(size=(din, dout)) * math.sqrt(2.0 / din)).astype(dtype))
            bs.append(np.zeros(dout, dtype=dtype))
        return cls(ws, bs)

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_tensors(cls, tensors) -> "MlpParams":
        return cls(list(tensors[0::2]), list(tensors[1::2]))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class MlpCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x: np.ndarray

    def tensors(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, MlpCache]:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise InvalidArgumentError(f"MLP expects (N, {params.dims[0]}) input, got {x.shape}")
    cache = MlpCache()
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        z = dense(h, w, b)
        cache.preacts.append(z)
        h = z if i == last else relu(z)
    return h, cache


def mlp_backward(params: MlpParams, cache: MlpCache, dlogits) -> MlpGrads:
    n_layers = len(params.weights)
    if len(cache.inputs) != n_layers:
        raise InvalidArgumentError("cache does not match these parameters")
    g = _f64(dlogits)
    if g.shape != cache.preacts[-1].shape:
        raise InvalidArgumentError(f"dlogits shape {g.shape} != logits shape {cache.preacts[-1].shape}")
    dws, dbs = [None] * n_layers, [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * (cache.preacts[i] > 0)
        dws[i] = (_f64(cache.inputs[i]).T @ g).astype(params.weights[i].dtype)
        dbs[i] = g.sum(axis=0).astype(params.biases[i].dtype)
        g = g @ _f64(params.weights[i]).T
    return MlpGrads(dws, dbs, g.astype(_out_dtype(cache.inputs[0])))


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float, momentum: float = 0.0, velocity=None):
    """Classic momentum SGD over a flat list of tensors.

    ``v ← μ v + g``; ``p ← p − lr v``. Returns ``(new_params, new_velocity)``.
    """
    if len(params) != len(grads):
        raise InvalidArgumentError("params/grads length mismatch")
    if velocity is None:
        velocity = [np.zeros_like(p) for p in params]
    new_p, new_v = [], []
    for p, g, v in zip(params, grads, velocity):
        if p.shape != g.shape:
            raise InvalidArgumentError(f"grad shape {g.shape} != param shape {p.shape}")
        v = momentum * v + g
        new_v.append(v)
        new_p.append(p - lr * v)
    return new_p, new_v
