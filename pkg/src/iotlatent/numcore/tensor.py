"""Dense float64 tensors with tape-style reverse-mode differentiation.

Every operation builds a node holding its inputs and a closure that pushes the
incoming gradient back to them.  ``backward`` walks the nodes reachable from a
scalar loss in reverse topological order, then frees the intermediate closures
so the graph cannot be replayed.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class NumcoreError(Exception):
    pass


class ShapeError(NumcoreError, ValueError):
    pass


class NonFiniteError(NumcoreError, FloatingPointError):
    pass


class UnknownOpError(NumcoreError, KeyError):
    pass


class GraphConsumedError(NumcoreError, RuntimeError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference and finite differences)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite value produced by {where}")
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = _finite(arr, "tensor construction")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, grad_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _finite(data, op)
    out.grad = None
    out.op = op
    out._consumed = False
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = grad_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def grad_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def grad_fn(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def grad_fn(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", grad_fn)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0

    def grad_fn(g):
        _accum(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), "relu", grad_fn)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)

    def grad_fn(g):
        _accum(x, g * (1.0 - y * y))

    return _make(y, (x,), "tanh", grad_fn)


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _stable_sigmoid(x.data)

    def grad_fn(g):
        _accum(x, g * y * (1.0 - y))

    return _make(y, (x,), "sigmoid", grad_fn)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        y = np.exp(x.data)

    def grad_fn(g):
        _accum(x, g * y)

    return _make(y, (x,), "exp", grad_fn)


def log(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)

    def grad_fn(g):
        _accum(x, g / x.data)

    return _make(y, (x,), "log", grad_fn)


# ------------------------------------------------------------------ linear alg

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    try:
        y = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch dims {a.shape} @ {b.shape}") from None

    def grad_fn(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(y, (a, b), "matmul", grad_fn)


# ------------------------------------------------------------------ reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def reduce_sum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    y = x.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(y), (x,), "reduce-sum", grad_fn)


def reduce_mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[ax] for ax in axes])) if axes else 1
    y = x.data.mean(axis=axes, keepdims=keepdims) if axes else x.data.copy()

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accum(x, np.broadcast_to(g / count, x.shape))

    return _make(np.asarray(y), (x,), "reduce-mean", grad_fn)


# ------------------------------------------------------------------ structural

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def grad_fn(g):
        _accum(x, g.reshape(x.shape))

    return _make(y, (x,), "reshape", grad_fn)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: bad axes {axes} for ndim {x.ndim}")
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        _accum(x, np.transpose(g, inverse))

    return _make(np.transpose(x.data, axes), (x,), "transpose", grad_fn)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data[index]
    except IndexError as exc:
        raise ShapeError(f"slice: {exc}") from None
    y = np.array(y, dtype=np.float64)

    def grad_fn(g):
        full = np.zeros_like(x.data)
        if _is_basic(index):
            full[index] = g
        else:
            np.add.at(full, index, g)
        _accum(x, full)

    return _make(y, (x,), "slice", grad_fn)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    try:
        y = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def grad_fn(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accum(t, piece)

    return _make(y, ts, "concat", grad_fn)


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"broadcast_to: {x.shape} -> {tuple(shape)}") from None

    def grad_fn(g):
        _accum(x, _unbroadcast(g, x.shape))

    return _make(y, (x,), "broadcast", grad_fn)


# ------------------------------------------------------------------ nn ops

def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        _accum(x, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    return _make(s, (x,), "softmax", grad_fn)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    s = np.exp(y)

    def grad_fn(g):
        _accum(x, g - s * g.sum(axis=axis, keepdims=True))

    return _make(y, (x,), "log-softmax", grad_fn)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean categorical cross-entropy of (n, c) logits against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross-entropy: logits {logits.shape} vs labels {labels.shape}")
    n, c = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ShapeError("cross-entropy: label out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def grad_fn(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        _accum(logits, g * d / n)

    return _make(np.asarray(loss), (logits,), "softmax-xent", grad_fn)


def layer_norm(x, gamma=None, beta=None, axis: int = -1, eps: float = 1e-8) -> Tensor:
    """Normalise along ``axis`` to zero mean / unit variance, then scale and shift."""
    x = as_tensor(x)
    gamma = None if gamma is None else as_tensor(gamma)
    beta = None if beta is None else as_tensor(beta)
    mu = x.data.mean(axis=axis, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat
    if gamma is not None:
        y = y * gamma.data
    if beta is not None:
        y = y + beta.data
    parents = tuple(t for t in (x, gamma, beta) if t is not None)

    def grad_fn(g):
        if gamma is not None:
            _accum(gamma, _unbroadcast(g * xhat, gamma.shape))
            gx = g * gamma.data
        else:
            gx = g
        if beta is not None:
            _accum(beta, _unbroadcast(g, beta.shape))
        if x.requires_grad:
            mean_g = gx.mean(axis=axis, keepdims=True)
            mean_gx = (gx * xhat).mean(axis=axis, keepdims=True)
            _accum(x, inv * (gx - mean_g - xhat * mean_gx))

    return _make(y, parents, "layer-norm", grad_fn)


def dropout(x, rate: float, rng: np.random.Generator | None = None, training: bool = True) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def grad_fn(g):
        _accum(x, g * mask)

    return _make(x.data * mask, (x,), "dropout", grad_fn)


# ------------------------------------------------------------------ dispatcher

OPS: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "softmax": softmax,
    "log-softmax": log_softmax,
    "layer-norm": layer_norm,
    "reshape": reshape,
    "transpose": transpose,
    "slice": slice_,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "reduce-sum": reduce_sum,
    "reduce-mean": reduce_mean,
    "dropout": dropout,
    "softmax-xent": softmax_cross_entropy,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = OPS[kind]
    except KeyError:
        raise UnknownOpError(kind) from None
    return fn(*inputs, **kwargs)


# ------------------------------------------------------------------ backward

def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf accumulators are reset to zero first.  Intermediate closures are
    released afterwards, so a second call on the same loss raises.
    """
    if loss._consumed:
        raise GraphConsumedError("graph already consumed by a previous backward pass")
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        loss._consumed = True
        return
    order = _topo(loss)
    for node in order:
        node.grad = np.zeros_like(node.data) if node.requires_grad else None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node.grad = None
    loss._consumed = True
