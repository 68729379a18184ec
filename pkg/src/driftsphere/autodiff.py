"""Minimal reverse-mode automatic differentiation over float64 arrays.

A ``Tensor`` wraps a numpy array plus an optional gradient; operations
record closures on a tape so ``backward`` can walk the graph once in
reverse topological order.  Only the handful of operations the models
need is provided.  Tensors that do not require gradients build no graph,
so inference-mode forwards (e.g. the momentum encoder) cost nothing
extra.

Gradients accumulate into ``.grad`` of leaf tensors with
``requires_grad=True``; frozen parameters are simply leaves with the flag
off and never receive a gradient.  Every gradient produced during the
walk is checked for NaN/inf and failures name the node that produced
them.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "parameter",
    "constant",
    "matmul",
    "tanh",
    "exp",
    "log",
    "reciprocal",
    "row_normalize",
    "log_softmax",
    "tsum",
    "tmean",
    "transpose",
    "concat",
    "backward",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------
    def __add__(self, other):
        return _binary(self, other, "add", lambda a, b: a + b,
                       lambda g, a, b: g, lambda g, a, b: g)

    __radd__ = __add__

    def __mul__(self, other):
        return _binary(self, other, "mul", lambda a, b: a * b,
                       lambda g, a, b: g * b, lambda g, a, b: g * a)

    __rmul__ = __mul__

    def __sub__(self, other):
        return _binary(self, other, "sub", lambda a, b: a - b,
                       lambda g, a, b: g, lambda g, a, b: -g)

    def __rsub__(self, other):
        return _binary(_wrap(other), self, "rsub", lambda a, b: a - b,
                       lambda g, a, b: g, lambda g, a, b: -g)

    def __neg__(self):
        return _unary(self, "neg", lambda a: -a, lambda g, a, out: -g)

    def __truediv__(self, other):
        return self * reciprocal(_wrap(other))

    def __rtruediv__(self, other):
        return _wrap(other) * reciprocal(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def parameter(data, name: str) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def constant(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name)


def _make(out_data, parents, backward_fn, name) -> Tensor:
    out = Tensor(out_data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out.name = name
    return out


def _binary(a, b, name, fwd, grad_a, grad_b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = fwd(a.data, b.data)

    def backward_fn(g, out):
        if a.requires_grad:
            a._accumulate(grad_a(g, a.data, b.data))
        if b.requires_grad:
            b._accumulate(grad_b(g, a.data, b.data))

    return _make(out_data, (a, b), backward_fn, name)


def _unary(x, name, fwd, grad_fn) -> Tensor:
    x = _wrap(x)
    out_data = fwd(x.data)

    def backward_fn(g, out):
        if x.requires_grad:
            x._accumulate(grad_fn(g, x.data, out.data))

    return _make(out_data, (x,), backward_fn, name)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape} incompatible")
    out_data = a.data @ b.data

    def backward_fn(g, out):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(out_data, (a, b), backward_fn, "matmul")


def tanh(x) -> Tensor:
    return _unary(x, "tanh", np.tanh, lambda g, a, out: g * (1.0 - out * out))


def exp(x) -> Tensor:
    return _unary(x, "exp", np.exp, lambda g, a, out: g * out)


def log(x) -> Tensor:
    return _unary(x, "log", np.log, lambda g, a, out: g / a)


def reciprocal(x) -> Tensor:
    return _unary(x, "reciprocal", lambda a: 1.0 / a, lambda g, a, out: -g * out * out)


def row_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """L2-normalize each row; the projection onto the sphere.

    Backward is the exact normalizer Jacobian (g - (g.y) y) / |x|, which
    is tangent to the output: the propagated gradient has zero component
    along each normalized row.
    """
    x = _wrap(x)
    norms = np.linalg.norm(x.data, axis=-1, keepdims=True)
    safe = np.maximum(norms, eps)
    out_data = x.data / safe

    def backward_fn(g, out):
        if x.requires_grad:
            inner = (g * out.data).sum(axis=-1, keepdims=True)
            x._accumulate((g - inner * out.data) / safe)

    return _make(out_data, (x,), backward_fn, "row_normalize")


def log_softmax(z: Tensor) -> Tensor:
    """Row-wise log softmax with the stable shifted formulation."""
    z = _wrap(z)
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out_data = shifted - lse

    def backward_fn(g, out):
        if z.requires_grad:
            soft = np.exp(out.data)
            z._accumulate(g - soft * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (z,), backward_fn, "log_softmax")


def tsum(x: Tensor, axis=None) -> Tensor:
    x = _wrap(x)
    out_data = x.data.sum(axis=axis)

    def backward_fn(g, out):
        if x.requires_grad:
            if axis is None:
                x._accumulate(np.broadcast_to(g, x.data.shape))
            else:
                x._accumulate(np.broadcast_to(np.expand_dims(g, axis), x.data.shape))

    return _make(out_data, (x,), backward_fn, "sum")


def tmean(x: Tensor, axis=None) -> Tensor:
    x = _wrap(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return tsum(x, axis=axis) * (1.0 / count)


def transpose(x: Tensor) -> Tensor:
    return _unary(x, "transpose", lambda a: a.T, lambda g, a, out: g.T)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def backward_fn(g, out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return _make(out_data, tuple(tensors), backward_fn, "concat")


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(leaf) into every reachable trainable leaf.

    ``loss`` must be scalar.  Raises NonFiniteError naming the first node
    whose gradient goes NaN/inf.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise NonFiniteError("loss is not finite", node=loss.name or "loss")
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_toposort(loss)):
        if node._backward_fn is None:
            continue
        if node.grad is None:
            continue
        if not np.all(np.isfinite(node.grad)):
            raise NonFiniteError("non-finite gradient", node=node.name or "unnamed-op")
        node._backward_fn(node.grad, node)
    for node in _toposort(loss):
        if node.grad is not None and not np.all(np.isfinite(node.grad)):
            raise NonFiniteError("non-finite gradient", node=node.name or "unnamed-op")


def zero_grads(params) -> None:
    """Clear accumulated gradients on a dict of parameter tensors."""
    for p in params.values():
        p.grad = None
