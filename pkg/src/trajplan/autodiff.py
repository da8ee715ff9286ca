"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Covers exactly the ops the trajectory predictor needs (linear, relu, concat,
set pooling, row tiling, mse) plus Adam with linear warm-up and a versioned
binary weight format.  Graphs are built dynamically; backward() walks the
tape in reverse topological order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError, WeightFormatError

WEIGHT_MAGIC = b"TJPW"
WEIGHT_VERSION = 1


class Tensor:
    """Node in the computation graph: float64 data plus accumulated gradient."""

    __slots__ = ("data", "grad", "_backward", "_prev")

    def __init__(self, data, _prev=()):
        self.data = np.asarray(data, dtype=float)
        self.grad: np.ndarray | None = None
        self._backward = None
        self._prev = _prev

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep from this node; seeds with ones."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x (n, d_in), w (d_in, d_out), b (d_out,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeMismatchError(f"linear: x {x.data.shape} incompatible with w {w.data.shape}")
    if b.data.shape != (w.data.shape[1],):
        raise ShapeMismatchError(f"linear: bias {b.data.shape} incompatible with w {w.data.shape}")
    out = Tensor(x.data @ w.data + b.data, (x, w, b))

    def _backward():
        g = out.grad
        x._accumulate(g @ w.data.T)
        w._accumulate(x.data.T @ g)
        b._accumulate(g.sum(axis=0))

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), (x,))

    def _backward():
        x._accumulate(out.grad * (x.data > 0.0))

    out._backward = _backward
    return out


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ShapeMismatchError("concat of zero tensors")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(out.grad[tuple(idx)])

    out._backward = _backward
    return out


def max_over_rows(x: Tensor) -> Tensor:
    """Set max-pool: column-wise max over the row (node) axis -> (1, d).

    Gradient routes to the argmax row per column; ties go to the first index.
    """
    arg = np.argmax(x.data, axis=0)
    out = Tensor(x.data[arg, np.arange(x.data.shape[1])][None, :], (x,))

    def _backward():
        g = np.zeros_like(x.data)
        g[arg, np.arange(x.data.shape[1])] = out.grad[0]
        x._accumulate(g)

    out._backward = _backward
    return out


def mean_over_rows(x: Tensor) -> Tensor:
    """Column-wise mean over the row axis -> (1, d)."""
    n = x.data.shape[0]
    out = Tensor(x.data.mean(axis=0, keepdims=True), (x,))

    def _backward():
        x._accumulate(np.repeat(out.grad, n, axis=0) / n)

    out._backward = _backward
    return out


def tile_rows(x: Tensor, n: int) -> Tensor:
    """Repeat a (1, d) row n times -> (n, d); gradient sums back over rows."""
    if x.data.shape[0] != 1:
        raise ShapeMismatchError(f"tile_rows expects a single row, got {x.data.shape}")
    out = Tensor(np.repeat(x.data, n, axis=0), (x,))

    def _backward():
        x._accumulate(out.grad.sum(axis=0, keepdims=True))

    out._backward = _backward
    return out


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error over all elements; d/dpred = 2 (pred - target) / n."""
    target = np.asarray(target, dtype=float)
    if pred.data.shape != target.shape:
        raise ShapeMismatchError(f"mse: prediction {pred.data.shape} vs target {target.shape}")
    diff = pred.data - target
    out = Tensor(np.array(np.mean(diff * diff)), (pred,))

    def _backward():
        pred._accumulate(out.grad * 2.0 * diff / diff.size)

    out._backward = _backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"add: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data, (a, b))

    def _backward():
        a._accumulate(out.grad)
        b._accumulate(out.grad)

    out._backward = _backward
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = Tensor(a.data * factor, (a,))

    def _backward():
        a._accumulate(out.grad * factor)

    out._backward = _backward
    return out


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Mlp3:
    """Three fully connected layers, ReLU between them, 128 hidden units by default."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, hidden: int = 128):
        self.d_in, self.hidden, self.d_out = d_in, hidden, d_out
        self.w1 = Tensor(glorot_uniform(rng, d_in, hidden))
        self.b1 = Tensor(np.zeros(hidden))
        self.w2 = Tensor(glorot_uniform(rng, hidden, hidden))
        self.b2 = Tensor(np.zeros(hidden))
        self.w3 = Tensor(glorot_uniform(rng, hidden, d_out))
        self.b3 = Tensor(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(linear(x, self.w1, self.b1))
        h = relu(linear(h, self.w2, self.b2))
        return linear(h, self.w3, self.b3)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2,
            f"{prefix}.w3": self.w3, f"{prefix}.b3": self.b3,
        }


# ---------------------------------------------------------------------------
# Adam with linear warm-up
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_epochs: int = 50
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState,
              epoch: int | None = None) -> dict[str, Tensor]:
    """Standard bias-corrected Adam update, in place on the parameter tensors.

    When `epoch` is given the base learning rate is scaled by the linear
    warm-up factor min(1, epoch / warmup_epochs); epochs are 1-based.
    """
    state.step += 1
    lr = state.lr
    if epoch is not None and state.warmup_epochs > 0:
        lr *= min(1.0, epoch / state.warmup_epochs)
    b1, b2 = state.beta1, state.beta2
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} != param {p.data.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Weight files: magic, version, JSON shape manifest, little-endian f64 payload
# ---------------------------------------------------------------------------

def save_tensors(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    names = sorted(tensors)
    manifest = {
        "meta": meta,
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(WEIGHT_MAGIC)
        f.write(struct.pack("<I", WEIGHT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(tensors[n], dtype="<f8").tobytes())


def load_tensors(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16 or raw[:4] != WEIGHT_MAGIC:
        raise WeightFormatError("not a weight file (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != WEIGHT_VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    (blob_len,) = struct.unpack("<Q", raw[8:16])
    if len(raw) < 16 + blob_len:
        raise WeightFormatError("truncated weight file (manifest)")
    try:
        manifest = json.loads(raw[16 : 16 + blob_len].decode("utf-8"))
        entries = manifest["tensors"]
        meta = manifest["meta"]
    except (ValueError, KeyError) as e:
        raise WeightFormatError(f"corrupt manifest: {e}") from e
    tensors: dict[str, np.ndarray] = {}
    offset = 16 + blob_len
    for entry in entries:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise WeightFormatError("truncated weight file (payload)")
        tensors[entry["name"]] = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise WeightFormatError("trailing bytes after payload")
    return meta, tensors


# ---------------------------------------------------------------------------
# Finite-difference oracle used by tests and the self-check suite
# ---------------------------------------------------------------------------

def finite_difference_check(fn, inputs: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` must rebuild its graph from `inputs` on every call and return a
    scalar Tensor.
    """
    out = fn(*inputs)
    for t in inputs:
        t.zero_grad()
    out.backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn(*inputs).data)
            flat[i] = orig - h
            f_minus = float(fn(*inputs).data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(numeric), abs(analytic.ravel()[i]), 1.0)
            worst = max(worst, abs(numeric - analytic.ravel()[i]) / denom)
    return worst
