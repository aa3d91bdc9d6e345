"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Only the operations the model needs: elementwise algebra with numpy
broadcasting, 2-D matrix multiplication, the activations, row gathering for
per-route parameter banks, axis slicing, and reductions. Backward runs in a
deterministic topological order, so single-threaded runs are bit-reproducible.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Operands are not conformable."""


class _GradMode:
    enabled = True


class no_grad:
    """Context manager disabling graph construction (eval-time forward)."""

    def __enter__(self):
        self._prev = _GradMode.enabled
        _GradMode.enabled = False

    def __exit__(self, *exc):
        _GradMode.enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # copy: g may alias a consumer's buffer
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from a scalar output."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
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
            for parent in node._parents:
                stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return hadamard(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named learnable tensor carrying its Adam moment estimates."""

    __slots__ = ("name", "adam_m", "adam_v")

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, inputs: Sequence[Tensor], backward_builder) -> Tensor:
    out = Tensor(data)
    if _GradMode.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._parents = tuple(t for t in inputs if t.requires_grad)
        out._backward_fn = backward_builder(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum-reduce a gradient back to the original (possibly broadcast) shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(out):
        def fn():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad, b.data.shape))
        return fn

    return _node(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data - b.data

    def backward(out):
        def fn():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad, a.data.shape))
            if b.requires_grad:
                b._accumulate(-_unbroadcast(out.grad, b.data.shape))
        return fn

    return _node(data, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def fn():
            a._accumulate(-out.grad)
        return fn

    return _node(-a.data, (a,), backward)


def hadamard(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"hadamard {a.data.shape} * {b.data.shape}") from exc

    def backward(out):
        def fn():
            if a.requires_grad:
                a._accumulate(_unbroadcast(out.grad * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(out.grad * a.data, b.data.shape))
        return fn

    return _node(data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    a = _as_tensor(a)

    def backward(out):
        def fn():
            a._accumulate(out.grad * c)
        return fn

    return _node(a.data * c, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(out):
        def fn():
            if a.requires_grad:
                a._accumulate(out.grad @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ out.grad)
        return fn

    return _node(data, (a, b), backward)


def outer_broadcast(n: int, w) -> Tensor:
    """Replicate a length-d vector as each of n rows of an (n, d) matrix."""
    w = _as_tensor(w)
    if w.data.ndim != 1:
        raise ShapeMismatch("outer_broadcast expects a vector")
    data = np.broadcast_to(w.data, (n, w.data.shape[0])).copy()

    def backward(out):
        def fn():
            w._accumulate(out.grad.sum(axis=0))
        return fn

    return _node(data, (w,), backward)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(out):
        def fn():
            a._accumulate(out.grad * data * (1.0 - data))
        return fn

    return _node(data, (a,), backward)


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward(out):
        def fn():
            a._accumulate(out.grad * (1.0 - data * data))
        return fn

    return _node(data, (a,), backward)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    """x for x >= 0, slope*x below; the subgradient at 0 is 1."""
    if not 0.0 < slope < 1.0:
        raise ValueError("slope must be in (0, 1)")
    a = _as_tensor(a)
    factor = np.where(a.data >= 0.0, 1.0, slope)

    def backward(out):
        def fn():
            a._accumulate(out.grad * factor)
        return fn

    return _node(a.data * factor, (a,), backward)


def pow_scalar(a, p: float) -> Tensor:
    a = _as_tensor(a)
    data = a.data ** p

    def backward(out):
        def fn():
            a._accumulate(out.grad * p * a.data ** (p - 1.0))
        return fn

    return _node(data, (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(out):
        def fn():
            for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * out.grad.ndim
                    sl[axis] = slice(start, stop)
                    t._accumulate(out.grad[tuple(sl)])
        return fn

    return _node(data, tensors, backward)


def narrow(a, axis: int, start: int, size: int) -> Tensor:
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + size)
    sl = tuple(sl)

    def backward(out):
        def fn():
            g = np.zeros_like(a.data)
            g[sl] = out.grad
            a._accumulate(g)
        return fn

    return _node(a.data[sl].copy(), (a,), backward)


def gather_rows(a, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor; gradients scatter-add back by row."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch("gather_rows expects a 2-D tensor")
    idx = np.asarray(idx, dtype=np.int64)

    def backward(out):
        def fn():
            g = np.zeros_like(a.data)
            np.add.at(g, idx, out.grad)
            a._accumulate(g)
        return fn

    return _node(a.data[idx], (a,), backward)


def sum_all(a) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def fn():
            a._accumulate(np.broadcast_to(out.grad, a.data.shape).copy())
        return fn

    return _node(a.data.sum(), (a,), backward)


def mean_all(a) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size

    def backward(out):
        def fn():
            a._accumulate(np.broadcast_to(out.grad / n, a.data.shape).copy())
        return fn

    return _node(a.data.mean(), (a,), backward)


def mean_axis0(a) -> Tensor:
    """Column means of a 2-D tensor (used by batch normalization)."""
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeMismatch("mean_axis0 expects a 2-D tensor")
    n = a.data.shape[0]

    def backward(out):
        def fn():
            a._accumulate(np.broadcast_to(out.grad / n, a.data.shape).copy())
        return fn

    return _node(a.data.mean(axis=0), (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)

    def backward(out):
        def fn():
            a._accumulate(out.grad.reshape(a.data.shape))
        return fn

    return _node(a.data.reshape(shape), (a,), backward)
