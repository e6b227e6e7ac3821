"""Neural-network primitives on top of the autodiff core.

Functional ops (conv1d, conv1d_transpose, maxpool1d, ...) take plain Tensors
for weights so gradient checks can perturb them directly; the layer classes
below wrap them with parameter registration, initialization and (for batch
norm) running statistics.

Convolutions use cross-correlation semantics. They are realized as one
batched matmul per kernel tap on strided views, which keeps the heavy
lifting inside BLAS without materializing an im2col buffer.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .core import (
    Param,
    ShapeError,
    Tensor,
    _make,
    add,
    concat,
    dropout,
    matmul,
    mul,
    relu,
    reshape,
    softmax,
    transpose,
)


def _check_3d(name: str, t: Tensor) -> None:
    if t.ndim != 3:
        raise ShapeError(f"{name} must be 3-d [B, C, T], got shape {t.shape}")


# -- convolution -------------------------------------------------------------------


def conv1d(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int = 1, padding: Optional[int] = None) -> Tensor:
    """1-d cross-correlation. x: [B, Cin, T], w: [Cout, Cin, K], b: [Cout].

    padding defaults to (K-1)//2, which preserves length at stride 1 for odd K.
    """
    _check_3d("conv1d input", x)
    if w.ndim != 3:
        raise ShapeError(f"conv1d weight must be [Cout, Cin, K], got shape {w.shape}")
    bsz, cin, t = x.shape
    cout, wcin, k = w.shape
    if cin != wcin:
        raise ShapeError(f"conv1d channel mismatch: input {x.shape} vs weight {w.shape}")
    p = (k - 1) // 2 if padding is None else padding
    t_out = (t + 2 * p - k) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d output would be empty: input {x.shape}, kernel {k}, stride {stride}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p))) if p else x.data
    wd = w.data
    w2 = wd.reshape(cout, cin * k)

    def im2col() -> np.ndarray:
        # [B, Ci, T_out, K] strided view -> one contiguous [Ci*K, B*T_out]
        views = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
        return views.transpose(1, 3, 0, 2).reshape(cin * k, bsz * t_out)

    y = (w2 @ im2col()).reshape(cout, bsz, t_out).transpose(1, 0, 2)
    y = np.ascontiguousarray(y)
    if b is not None:
        y += b.data[:, None]

    def backward(g):
        grads = []
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(cout, bsz * t_out)
        cols = im2col()  # recomputed: cheaper than holding 3x activations alive
        gw = (g2 @ cols.T).reshape(cout, cin, k)
        gcols = (w2.T @ g2).reshape(cin, k, bsz, t_out)
        gxp = np.zeros_like(xp)
        for tap in range(k):
            gxp[:, :, tap : tap + stride * (t_out - 1) + 1 : stride] += gcols[:, tap].transpose(1, 0, 2)
        gx = gxp[:, :, p : p + t] if p else gxp
        grads.append((x, gx))
        grads.append((w, gw))
        if b is not None:
            grads.append((b, g.sum(axis=(0, 2))))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, backward)


def conv1d_transpose(x: Tensor, w: Tensor, b: Optional[Tensor], stride: int) -> Tensor:
    """Transposed 1-d convolution (the adjoint of unpadded conv1d).

    x: [B, Cin, T], w: [Cin, Cout, K]; output length (T-1)*stride + K, so the
    stride-2 / kernel-2 configuration exactly doubles the length.
    """
    _check_3d("conv1d_transpose input", x)
    if w.ndim != 3:
        raise ShapeError(f"conv1d_transpose weight must be [Cin, Cout, K], got shape {w.shape}")
    bsz, cin, t = x.shape
    wcin, cout, k = w.shape
    if cin != wcin:
        raise ShapeError(f"conv1d_transpose channel mismatch: input {x.shape} vs weight {w.shape}")
    t_out = (t - 1) * stride + k

    wd = w.data
    w2 = wd.reshape(cin, cout * k)
    x2 = np.ascontiguousarray(x.data.transpose(1, 0, 2)).reshape(cin, bsz * t)

    contrib = (w2.T @ x2).reshape(cout, k, bsz, t)
    y = np.zeros((bsz, cout, t_out), dtype=x.data.dtype)
    for tap in range(k):
        y[:, :, tap : tap + stride * (t - 1) + 1 : stride] += contrib[:, tap].transpose(1, 0, 2)
    if b is not None:
        y += b.data[:, None]

    def backward(g):
        grads = []
        gp = np.empty((cout, k, bsz, t), dtype=g.dtype)
        for tap in range(k):
            gp[:, tap] = g[:, :, tap : tap + stride * (t - 1) + 1 : stride].transpose(1, 0, 2)
        gp2 = gp.reshape(cout * k, bsz * t)
        gx = (w2 @ gp2).reshape(cin, bsz, t).transpose(1, 0, 2)
        gw = (gp2 @ x2.T).T.reshape(cin, cout, k)
        grads.append((x, np.ascontiguousarray(gx)))
        grads.append((w, gw))
        if b is not None:
            grads.append((b, g.sum(axis=(0, 2))))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, backward)


# -- pooling ----------------------------------------------------------------------


def maxpool1d(x: Tensor, window: int = 2, stride: Optional[int] = None) -> Tensor:
    """Non-overlapping max pooling; a trailing remainder shorter than the
    window is dropped. Gradient routes to the earliest maximum of each window."""
    _check_3d("maxpool1d input", x)
    stride = window if stride is None else stride
    if stride != window:
        raise ValueError("maxpool1d supports stride == window only")
    bsz, c, t = x.shape
    if t < window:
        raise ShapeError(f"maxpool1d input length {t} shorter than window {window}")
    t_out = t // window
    xv = x.data[:, :, : t_out * window].reshape(bsz, c, t_out, window)
    out = xv.max(axis=-1)
    idx = xv.argmax(axis=-1)

    def backward(g):
        buf = np.zeros((bsz, c, t_out, window), dtype=x.data.dtype)
        np.put_along_axis(buf, idx[..., None], g[..., None], axis=-1)
        gx = buf.reshape(bsz, c, t_out * window)
        if t_out * window != t:
            gx = np.pad(gx, ((0, 0), (0, 0), (0, t - t_out * window)))
        return ((x, gx),)

    return _make(out, (x,), backward)


def avgpool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping mean pooling over the last axis; length must divide."""
    _check_3d("avgpool1d input", x)
    bsz, c, t = x.shape
    if t % window:
        raise ShapeError(f"avgpool1d length {t} not divisible by window {window}")
    t_out = t // window
    out = x.data.reshape(bsz, c, t_out, window).mean(axis=-1)

    def backward(g):
        gx = np.broadcast_to(g[..., None] / window, (bsz, c, t_out, window))
        return ((x, gx.reshape(bsz, c, t)),)

    return _make(out, (x,), backward)


# -- normalization -----------------------------------------------------------------


class UninitializedStatisticsError(RuntimeError):
    """Eval-mode batch norm was asked for running statistics before any
    train-mode step populated them."""


def _batchnorm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float):
    mu = x.data.mean(axis=(0, 2))
    var = x.data.var(axis=(0, 2))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[:, None]) * inv[:, None]
    out = gamma.data[:, None] * xhat + beta.data[:, None]
    n = x.shape[0] * x.shape[2]

    def backward(g):
        dxhat = g * gamma.data[:, None]
        s1 = dxhat.sum(axis=(0, 2))
        s2 = (dxhat * xhat).sum(axis=(0, 2))
        gx = (inv[:, None] / n) * (n * dxhat - s1[:, None] - xhat * s2[:, None])
        return (
            (x, gx),
            (gamma, (g * xhat).sum(axis=(0, 2))),
            (beta, g.sum(axis=(0, 2))),
        )

    return _make(out, (x, gamma, beta), backward), mu, var, n


def _batchnorm_eval(x: Tensor, gamma: Tensor, beta: Tensor, rm: np.ndarray, rv: np.ndarray, eps: float) -> Tensor:
    inv = 1.0 / np.sqrt(rv + eps)
    scale = (gamma.data * inv)[:, None]
    xhat = (x.data - rm[:, None]) * inv[:, None]
    out = gamma.data[:, None] * xhat + beta.data[:, None]

    def backward(g):
        return (
            (x, g * scale),
            (gamma, (g * xhat).sum(axis=(0, 2))),
            (beta, g.sum(axis=(0, 2))),
        )

    return _make(out, (x, gamma, beta), backward)


class BatchNorm1d:
    """Per-channel batch normalization for [B, C, T] tensors with running
    statistics for eval mode (momentum 0.1, unbiased running variance)."""

    def __init__(self, prefix: str, channels: int, dtype=np.float32, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = Param(f"{prefix}.gamma", Tensor(np.ones(channels, dtype=dtype)))
        self.beta = Param(f"{prefix}.beta", Tensor(np.zeros(channels, dtype=dtype)))
        self.eps = eps
        self.momentum = momentum
        self.prefix = prefix
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.initialized = False

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            out, mu, var, n = _batchnorm_train(x, self.gamma.value, self.beta.value, self.eps)
            unbiased = var * (n / (n - 1)) if n > 1 else var
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mu).astype(self.running_mean.dtype)
            self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(self.running_var.dtype)
            self.initialized = True
            return out
        if not self.initialized:
            raise UninitializedStatisticsError(
                f"batch norm {self.prefix!r} used in eval mode before any train-mode step"
            )
        return _batchnorm_eval(x, self.gamma.value, self.beta.value, self.running_mean, self.running_var, self.eps)

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{self.prefix}.running_mean", self.running_mean),
            (f"{self.prefix}.running_var", self.running_var),
            (f"{self.prefix}.initialized", np.asarray([1.0 if self.initialized else 0.0], dtype=np.float32)),
        ]

    def load_buffers(self, values: dict[str, np.ndarray]) -> None:
        self.running_mean = values[f"{self.prefix}.running_mean"].astype(self.running_mean.dtype)
        self.running_var = values[f"{self.prefix}.running_var"].astype(self.running_var.dtype)
        self.initialized = bool(values[f"{self.prefix}.initialized"][0])


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last axis."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data * xhat + beta.data
    d = x.shape[-1]

    def backward(g):
        dxhat = g * gamma.data
        s1 = dxhat.mean(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (dxhat - s1 - xhat * s2)
        axes = tuple(range(x.ndim - 1))
        return ((x, gx), (gamma, (g * xhat).sum(axis=axes)), (beta, g.sum(axis=axes)))

    return _make(out, (x, gamma, beta), backward)


class LayerNorm:
    def __init__(self, prefix: str, dim: int, dtype=np.float32):
        self.gamma = Param(f"{prefix}.gamma", Tensor(np.ones(dim, dtype=dtype)))
        self.beta = Param(f"{prefix}.beta", Tensor(np.zeros(dim, dtype=dtype)))

    def __call__(self, x: Tensor) -> Tensor:
        return layernorm(x, self.gamma.value, self.beta.value)

    def params(self) -> list[Param]:
        return [self.gamma, self.beta]


# -- dense layers ------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Optional[Tensor]) -> Tensor:
    """x @ w (+ b) on the last axis; w: [Din, Dout]."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear mismatch: input {x.shape} vs weight {w.shape}")
    y = matmul(x, w)
    return add(y, b) if b is not None else y


class Linear:
    def __init__(self, prefix: str, din: int, dout: int, rng: np.random.Generator, dtype=np.float32, gain: float = 1.0):
        std = gain * math.sqrt(2.0 / din)
        self.w = Param(f"{prefix}.w", Tensor(rng.normal(0.0, std, size=(din, dout)).astype(dtype)))
        self.b = Param(f"{prefix}.b", Tensor(np.zeros(dout, dtype=dtype)))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.w.value, self.b.value)

    def params(self) -> list[Param]:
        return [self.w, self.b]


class Conv1d:
    def __init__(
        self,
        prefix: str,
        cin: int,
        cout: int,
        k: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
        dtype=np.float32,
    ):
        std = math.sqrt(2.0 / (cin * k))
        self.w = Param(f"{prefix}.w", Tensor(rng.normal(0.0, std, size=(cout, cin, k)).astype(dtype)))
        self.b = Param(f"{prefix}.b", Tensor(np.zeros(cout, dtype=dtype)))
        self.stride = stride
        self.padding = padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w.value, self.b.value, stride=self.stride, padding=self.padding)

    def params(self) -> list[Param]:
        return [self.w, self.b]


class ConvTranspose1d:
    def __init__(self, prefix: str, cin: int, cout: int, k: int, stride: int, rng: np.random.Generator, dtype=np.float32):
        std = math.sqrt(2.0 / (cin * k))
        self.w = Param(f"{prefix}.w", Tensor(rng.normal(0.0, std, size=(cin, cout, k)).astype(dtype)))
        self.b = Param(f"{prefix}.b", Tensor(np.zeros(cout, dtype=dtype)))
        self.stride = stride

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_transpose(x, self.w.value, self.b.value, stride=self.stride)

    def params(self) -> list[Param]:
        return [self.w, self.b]


# -- attention ---------------------------------------------------------------------


def positional_encoding(t: int, d: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal position table [T, D]; even columns sine, odd columns cosine.
    Row 0 is [0, 1, 0, 1, ...]; all values lie in [-1, 1]."""
    if t < 1 or d < 1:
        raise ValueError(f"positional encoding needs t, d >= 1, got ({t}, {d})")
    if d % 2:
        raise ValueError(f"positional encoding dimension must be even, got {d}")
    pos = np.arange(t, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((t, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe.astype(dtype)


def mhsa(
    x: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    heads: int,
    pos: Optional[np.ndarray] = None,
) -> Tensor:
    """Multi-head scaled dot-product self-attention on [B, T, D].

    The positional table, when given, is added to the query/key inputs only;
    values stay position-free, so a constant input sequence maps to a constant
    output sequence regardless of position.
    """
    bsz, t, d = x.shape
    if d % heads:
        raise ValueError(f"model dim {d} not divisible by heads {heads}")
    dh = d // heads
    xqk = add(x, Tensor(np.asarray(pos, dtype=x.data.dtype))) if pos is not None else x
    q = linear(xqk, wq, bq)
    k = linear(xqk, wk, bk)
    v = linear(x, wv, bv)

    def split_heads(h: Tensor) -> Tensor:
        return transpose(reshape(h, (bsz, t, heads, dh)), (0, 2, 1, 3))

    q, k, v = split_heads(q), split_heads(k), split_heads(v)
    scale = Tensor(np.asarray(1.0 / math.sqrt(dh), dtype=x.data.dtype))
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), scale)
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)
    merged = reshape(transpose(ctx, (0, 2, 1, 3)), (bsz, t, d))
    return linear(merged, wo, bo)


class MultiHeadSelfAttention:
    def __init__(self, prefix: str, dim: int, heads: int, rng: np.random.Generator, dtype=np.float32, out_gain: float = 1.0):
        if dim % heads:
            raise ValueError(f"model dim {dim} not divisible by heads {heads}")
        std = math.sqrt(1.0 / dim)

        def make(name, gain=1.0):
            w = Param(f"{prefix}.{name}.w", Tensor((gain * std * rng.standard_normal((dim, dim))).astype(dtype)))
            b = Param(f"{prefix}.{name}.b", Tensor(np.zeros(dim, dtype=dtype)))
            return w, b

        self.wq, self.bq = make("q")
        self.wk, self.bk = make("k")
        self.wv, self.bv = make("v")
        self.wo, self.bo = make("out", gain=out_gain)
        self.heads = heads

    def __call__(self, x: Tensor, pos: Optional[np.ndarray] = None) -> Tensor:
        return mhsa(
            x,
            self.wq.value, self.bq.value,
            self.wk.value, self.bk.value,
            self.wv.value, self.bv.value,
            self.wo.value, self.bo.value,
            self.heads,
            pos=pos,
        )

    def params(self) -> list[Param]:
        return [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]


class TransformerEncoderLayer:
    """Post-norm encoder block: Add&Norm around attention, then around a
    two-layer feed-forward expansion."""

    def __init__(
        self,
        prefix: str,
        dim: int,
        heads: int,
        ffn_dim: int,
        dropout_p: float,
        rng: np.random.Generator,
        dtype=np.float32,
        out_gain: float = 1.0,
    ):
        self.attn = MultiHeadSelfAttention(f"{prefix}.attn", dim, heads, rng, dtype, out_gain=out_gain)
        self.norm1 = LayerNorm(f"{prefix}.norm1", dim, dtype)
        self.ff1 = Linear(f"{prefix}.ff1", dim, ffn_dim, rng, dtype)
        self.ff2 = Linear(f"{prefix}.ff2", ffn_dim, dim, rng, dtype, gain=out_gain)
        self.norm2 = LayerNorm(f"{prefix}.norm2", dim, dtype)
        self.dropout_p = dropout_p

    def __call__(self, x: Tensor, pos: Optional[np.ndarray], train: bool, rng: Optional[np.random.Generator]) -> Tensor:
        h = self.attn(x, pos=pos)
        if train and self.dropout_p > 0:
            h = dropout(h, self.dropout_p, rng=rng)
        x = self.norm1(add(x, h))
        h = self.ff2(relu(self.ff1(x)))
        if train and self.dropout_p > 0:
            h = dropout(h, self.dropout_p, rng=rng)
        return self.norm2(add(x, h))

    def params(self) -> list[Param]:
        return [*self.attn.params(), *self.norm1.params(), *self.ff1.params(), *self.ff2.params(), *self.norm2.params()]
