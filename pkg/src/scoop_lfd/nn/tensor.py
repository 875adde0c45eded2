"""Reverse-mode differentiable tensors over numpy arrays.

Every forward operation records its parents and a backward closure on the
output tensor; calling ``backward()`` on a scalar result replays those
closures in reverse topological order and accumulates gradients into the
``grad`` slot of every tensor that requires them.  The graph is rebuilt on
every forward pass; nothing is cached between passes.
"""
from __future__ import annotations

import numpy as np

from scoop_lfd.errors import ShapeMismatchError

DEFAULT_DTYPE = np.float32


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray):
            arr = data
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # ---- introspection ----

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    # ---- autodiff driver ----

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatchError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self._parents:
            raise RuntimeError("backward called before any recorded forward operation")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # Op outputs only carry per-pass flow; clearing them here means a
        # second backward adds exactly one more contribution to each leaf.
        for node in topo:
            if node._parents:
                node.grad = None

    # ---- elementwise arithmetic ----

    @staticmethod
    def _coerce(other, dtype):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=dtype))

    def __add__(self, other):
        other = self._coerce(other, self.data.dtype)
        a, b = self, other
        out_data = a.data + b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._from_op(out_data, (a, b), bwd)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bwd(g):
            if a.requires_grad:
                a._accumulate(-g)

        return Tensor._from_op(-a.data, (a,), bwd)

    def __sub__(self, other):
        other = self._coerce(other, self.data.dtype)
        a, b = self, other
        out_data = a.data - b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._from_op(out_data, (a, b), bwd)

    def __rsub__(self, other):
        return self._coerce(other, self.data.dtype) - self

    def __mul__(self, other):
        other = self._coerce(other, self.data.dtype)
        a, b = self, other
        out_data = a.data * b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._from_op(out_data, (a, b), bwd)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = self._coerce(other, self.data.dtype)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
            raise ShapeMismatchError(f"matmul shapes incompatible: {a.data.shape} @ {b.data.shape}")
        out_data = a.data @ b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

        return Tensor._from_op(out_data, (a, b), bwd)

    # ---- reductions and shape ----

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())

        return Tensor._from_op(np.asarray(out_data), (a,), bwd)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old_shape = a.data.shape
        out_data = a.data.reshape(shape)

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g.reshape(old_shape))

        return Tensor._from_op(out_data, (a,), bwd)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    parts = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return Tensor._from_op(out_data, tuple(parts), bwd)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never sees a large positive argument.
    d = x.data
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * s * (1.0 - s))

    return Tensor._from_op(s, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (1.0 - t * t))

    return Tensor._from_op(t, (x,), bwd)


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    pos = x.data > 0
    out_data = np.where(pos, x.data, x.data * slope)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.where(pos, g, g * slope))

    return Tensor._from_op(out_data.astype(x.data.dtype), (x,), bwd)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared differences over all elements."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.data.shape != target.data.shape:
        raise ShapeMismatchError(f"mse_loss shapes differ: {pred.data.shape} vs {target.data.shape}")
    diff = pred - target
    return (diff * diff).mean()
