"""Dense n-d arrays with reverse-mode automatic differentiation.

A Tensor wraps a numpy array (float32 by default, float64 for the shadow
mode used by gradient checks) and optionally records the operation that
produced it. backward() walks the recorded graph in reverse topological
order and accumulates gradients into every tensor created with
requires_grad=True.

The tape is implicit: each Tensor keeps references to its parents and a
closure computing the parent gradients from its own. Tapes are
single-threaded; separate graphs may live on separate threads.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


def _reduce_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={'yes' if self.requires_grad else 'no'})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- autodiff ------------------------------------------------------------

    @property
    def _traced(self) -> bool:
        return self.requires_grad or self._backward is not None

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = _reduce_to_shape(np.asarray(grad, dtype=self.data.dtype), self.shape)
        if self.grad is None:
            self.grad = grad.copy() if not grad.flags.owndata else grad
        else:
            self.grad = self.grad + grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Reverse-mode sweep from this tensor.

        grad defaults to ones (use a scalar loss). Gradients accumulate into
        .grad of every reachable tensor with requires_grad=True.
        """
        if grad is None:
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen and p._traced:
                    stack.append((p, False))
        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward is not None:
                for parent, pg in node._backward(g):
                    if not parent._traced:
                        continue
                    key = id(parent)
                    if key in pending:
                        pending[key] = pending[key] + pg
                    else:
                        pending[key] = pg

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0, self.dtype))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other, self.dtype))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op result; drop the tape when no parent participates in it."""
    if any(p._traced for p in parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


# -- elementwise and reduction ops ---------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return ((a, _reduce_to_shape(g, a.shape)), (b, _reduce_to_shape(g, b.shape)))

    return _make(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward(g):
        return ((a, _reduce_to_shape(g, a.shape)), (b, _reduce_to_shape(-g, b.shape)))

    return _make(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return ((a, _reduce_to_shape(g * b.data, a.shape)), (b, _reduce_to_shape(g * a.data, b.shape)))

    return _make(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ((a, _reduce_to_shape(ga, a.shape)), (b, _reduce_to_shape(gb, b.shape)))

    return _make(out, (a, b), backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape)),)

    return _make(out, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.mean(axis=axis, keepdims=keepdims)
    denom = x.size if axis is None else x.data.size // out.size if out.size else 1

    def backward(g):
        g = np.asarray(g) / denom
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape)),)

    return _make(out, (x,), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(g):
        return ((x, g * (x.data > 0)),)

    return _make(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # Stable in both tails: 1/(1+e^-z) for z>=0, e^z/(1+e^z) for z<0.
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        return ((x, g * out * (1.0 - out)),)

    return _make(out, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        return ((x, g * out),)

    return _make(out, (x,), backward)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def backward(g):
        return ((x, g / x.data),)

    return _make(out, (x,), backward)


def tabs(x: Tensor) -> Tensor:
    out = np.abs(x.data)

    def backward(g):
        return ((x, g * np.sign(x.data)),)

    return _make(out, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return ((x, out * (g - dot)),)

    return _make(out, (x,), backward)


# -- shape ops -------------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = x.data.reshape(shape)

    def backward(g):
        return ((x, g.reshape(x.shape)),)

    return _make(out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))
    inv = np.argsort(axes)

    def backward(g):
        return ((x, g.transpose(inv)),)

    return _make(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        return tuple(zip(tensors, parts))

    return _make(out, tuple(tensors), backward)


def pad_time(x: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    width = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    out = np.pad(x.data, width)

    def backward(g):
        sl = (slice(None),) * (x.ndim - 1) + (slice(left, g.shape[-1] - right if right else None),)
        return ((x, g[sl]),)

    return _make(out, (x,), backward)


def slice_time(x: Tensor, start: int, stop: int) -> Tensor:
    """Slice the last axis; gradient scatters back into place."""
    sl = (slice(None),) * (x.ndim - 1) + (slice(start, stop),)
    out = x.data[sl]

    def backward(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        return ((x, full),)

    return _make(out, (x,), backward)


def repeat_time(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of axis 1 for [B, T, D] tensors."""
    b, t, d = x.shape
    out = np.broadcast_to(x.data[:, :, None, :], (b, t, factor, d)).reshape(b, t * factor, d)

    def backward(g):
        return ((x, g.reshape(b, t, factor, d).sum(axis=2)),)

    return _make(np.ascontiguousarray(out), (x,), backward)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator] = None, mask: Optional[np.ndarray] = None) -> Tensor:
    """Inverted dropout. Pass a precomputed keep-mask for reproducible tests;
    otherwise an rng must be supplied. p=0 is the identity."""
    if p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {p}")
    if mask is None:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or an explicit mask")
        mask = (rng.random(x.shape) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    keep = mask * scale
    out = x.data * keep

    def backward(g):
        return ((x, g * keep),)

    return _make(out, (x,), backward)


class Param:
    """A named learnable tensor. A model registers each Param exactly once."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value: Tensor):
        value.requires_grad = True
        self.name = name
        self.value = value

    @property
    def data(self) -> np.ndarray:
        return self.value.data

    @data.setter
    def data(self, arr: np.ndarray) -> None:
        self.value.data = np.asarray(arr, dtype=self.value.data.dtype)

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.value.grad

    def zero_grad(self) -> None:
        self.value.grad = None

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"
