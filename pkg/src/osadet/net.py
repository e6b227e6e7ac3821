"""The detector network: a cross-modality 1D U-Net backbone, a Transformer
encoder over pooled bottleneck tokens, and a fused sigmoid head emitting the
four per-label probability map columns.

Layout for the default configuration (T = 25,000 samples, 250 s at 100 Hz):

  stem+encoder   3 -> 16 @ T, 32 @ T/2, 64 @ T/4, 128 @ T/8 (bottleneck)
  transformer    bottleneck patch-projected (stride 25) to 125 tokens of
                 model_dim, 2 encoder layers, nearest-neighbour upsample back
  decoder        transposed convs + skip concats + bottleneck blocks back to T
  head           [decoder avg-pooled to T', upsampled tokens] -> FC -> 4 logits

The three input channels fuse in the shared stem (early fusion); a masked
modality is exactly a zero-filled channel, so masking and zero-filling are
the same operation by construction.

The positional table feeds attention queries/keys only, and the attention
output/FFN projections start at a small gain: a fresh network is then
temporally local (the U-Net's receptive field), and constant inputs produce
time-constant logits; attention mixing develops with training.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ModalityMask, N_CHANNELS, N_LABELS
from .tensor import (
    BatchNorm1d,
    Conv1d,
    ConvTranspose1d,
    Linear,
    Param,
    ShapeError,
    Tensor,
    TransformerEncoderLayer,
    avgpool1d,
    concat,
    dropout,
    maxpool1d,
    positional_encoding,
    relu,
    repeat_time,
    reshape,
    transpose,
)

TRANSFORMER_OUT_GAIN = 0.05  # residual-branch init scale; keeps a fresh net local in time


@dataclass(frozen=True)
class NetConfig:
    unet_levels: int = 4
    base_channels: int = 16
    transformer_layers: int = 2
    heads: int = 4
    model_dim: int = 64
    dropout: float = 0.25
    out_stride: int = 8
    token_stride: int = 25
    epoch_samples: int = 25_000

    def __post_init__(self) -> None:
        if self.unet_levels < 2:
            raise ValueError("unet_levels must be at least 2")
        if self.base_channels < 1 or self.model_dim < 2 or self.heads < 1:
            raise ValueError("base_channels, model_dim and heads must be positive")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if self.model_dim % 2:
            raise ValueError("model_dim must be even (sinusoidal position table)")
        if not 0.2 <= self.dropout <= 0.3:
            raise ValueError(f"dropout must lie in [0.2, 0.3], got {self.dropout}")
        if self.out_stride < 1 or self.out_stride & (self.out_stride - 1):
            raise ValueError(f"out_stride must be a power of two, got {self.out_stride}")
        if self.out_stride > 2**self.unet_levels:
            raise ValueError(f"out_stride {self.out_stride} exceeds 2^unet_levels")
        down = 2 ** (self.unet_levels - 1)
        if self.epoch_samples % down:
            raise ValueError(
                f"epoch_samples {self.epoch_samples} not divisible by the encoder downsampling {down}"
            )
        if self.epoch_samples % self.out_stride:
            raise ValueError("epoch_samples must be divisible by out_stride")
        bneck = self.epoch_samples // down
        if bneck % self.token_stride:
            raise ValueError(f"bottleneck length {bneck} not divisible by token_stride {self.token_stride}")
        tp = self.t_prime
        if not (bneck % tp == 0 or tp % bneck == 0):
            raise ValueError(f"output length {tp} incommensurate with bottleneck length {bneck}")

    @property
    def t_prime(self) -> int:
        return self.epoch_samples // self.out_stride

    @property
    def level_channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * 2**i for i in range(self.unet_levels))

    @property
    def bottleneck_len(self) -> int:
        return self.epoch_samples // 2 ** (self.unet_levels - 1)

    @property
    def n_tokens(self) -> int:
        return self.bottleneck_len // self.token_stride


@dataclass(frozen=True)
class ForwardOutput:
    logits: Tensor  # [B, T', 4]
    v_unet: Tensor
    v_trans: Tensor


class _ConvBlock:
    """conv(k3) -> BN -> ReLU, twice."""

    def __init__(self, prefix: str, cin: int, cout: int, rng, dtype):
        self.c1 = Conv1d(f"{prefix}.c1", cin, cout, 3, rng=rng, dtype=dtype)
        self.b1 = BatchNorm1d(f"{prefix}.b1", cout, dtype=dtype)
        self.c2 = Conv1d(f"{prefix}.c2", cout, cout, 3, rng=rng, dtype=dtype)
        self.b2 = BatchNorm1d(f"{prefix}.b2", cout, dtype=dtype)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        x = relu(self.b1(self.c1(x), train))
        return relu(self.b2(self.c2(x), train))

    def params(self):
        return [*self.c1.params(), *self.b1.params(), *self.c2.params(), *self.b2.params()]

    def bns(self):
        return [self.b1, self.b2]


class _DecoderBlock:
    """transposed conv upsample, skip concat, then a bottleneck block
    (1x1 reduce + k3 conv)."""

    def __init__(self, prefix: str, cin: int, cout: int, rng, dtype):
        self.up = ConvTranspose1d(f"{prefix}.up", cin, cout, k=2, stride=2, rng=rng, dtype=dtype)
        self.reduce = Conv1d(f"{prefix}.reduce", 2 * cout, cout, 1, rng=rng, dtype=dtype)
        self.br = BatchNorm1d(f"{prefix}.br", cout, dtype=dtype)
        self.conv = Conv1d(f"{prefix}.conv", cout, cout, 3, rng=rng, dtype=dtype)
        self.bc = BatchNorm1d(f"{prefix}.bc", cout, dtype=dtype)

    def __call__(self, x: Tensor, skip: Tensor, train: bool) -> Tensor:
        x = self.up(x)
        x = concat([x, skip], axis=1)
        x = relu(self.br(self.reduce(x), train))
        return relu(self.bc(self.conv(x), train))

    def params(self):
        return [*self.up.params(), *self.reduce.params(), *self.br.params(), *self.conv.params(), *self.bc.params()]

    def bns(self):
        return [self.br, self.bc]


class Model:
    """Builds all layers from a seeded rng; construction order fixes the
    parameter registry order, which checkpointing and the optimizer rely on."""

    def __init__(self, cfg: NetConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        chans = cfg.level_channels

        self.encoder: list[_ConvBlock] = []
        cin = N_CHANNELS
        for i, c in enumerate(chans):
            self.encoder.append(_ConvBlock(f"enc{i}", cin, c, rng, dtype))
            cin = c

        self.token_proj = Conv1d(
            "trans.proj", chans[-1], cfg.model_dim, k=cfg.token_stride, stride=cfg.token_stride,
            padding=0, rng=rng, dtype=dtype,
        )
        self.pos = positional_encoding(cfg.n_tokens, cfg.model_dim, dtype=dtype)
        self.transformer = [
            TransformerEncoderLayer(
                f"trans.layer{i}", cfg.model_dim, cfg.heads, 4 * cfg.model_dim, cfg.dropout,
                rng, dtype, out_gain=TRANSFORMER_OUT_GAIN,
            )
            for i in range(cfg.transformer_layers)
        ]

        self.decoder: list[_DecoderBlock] = []
        for i in range(cfg.unet_levels - 1, 0, -1):
            self.decoder.append(_DecoderBlock(f"dec{i}", chans[i], chans[i - 1], rng, dtype))

        fusion_dim = chans[0] + cfg.model_dim
        self.head1 = Linear("head.fc1", fusion_dim, cfg.model_dim, rng, dtype)
        self.head2 = Linear("head.fc2", cfg.model_dim, N_LABELS, rng, dtype, gain=0.5)

    # -- registry ----------------------------------------------------------------

    def params(self) -> list[Param]:
        out: list[Param] = []
        for blk in self.encoder:
            out.extend(blk.params())
        out.extend(self.token_proj.params())
        for layer in self.transformer:
            out.extend(layer.params())
        for blk in self.decoder:
            out.extend(blk.params())
        out.extend(self.head1.params())
        out.extend(self.head2.params())
        names = [p.name for p in out]
        assert len(names) == len(set(names)), "duplicate parameter names"
        return out

    def _bns(self) -> list[BatchNorm1d]:
        bns = []
        for blk in self.encoder:
            bns.extend(blk.bns())
        for blk in self.decoder:
            bns.extend(blk.bns())
        return bns

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for bn in self._bns():
            out.extend(bn.buffers())
        return out

    def load_buffers(self, values: dict[str, np.ndarray]) -> None:
        for bn in self._bns():
            bn.load_buffers(values)

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    # -- forward -----------------------------------------------------------------

    def forward(
        self,
        x,
        mask: ModalityMask,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> ForwardOutput:
        if not mask.any:
            raise ValueError("modality mask must keep at least one channel")
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 3 or x.shape[1] != N_CHANNELS or x.shape[2] != self.cfg.epoch_samples:
            raise ShapeError(
                f"expected input [B, {N_CHANNELS}, {self.cfg.epoch_samples}], got {x.shape}"
            )
        if train and self.cfg.dropout > 0 and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")

        mvec = Tensor(mask.as_array().astype(self.dtype).reshape(1, N_CHANNELS, 1))
        h = x * mvec

        skips: list[Tensor] = []
        for i, blk in enumerate(self.encoder):
            h = blk(h, train)
            if i < len(self.encoder) - 1:
                skips.append(h)
                h = maxpool1d(h, 2)
        bottleneck = h  # [B, C_last, bneck]

        tokens = self.token_proj(bottleneck)  # [B, D, n_tokens]
        tokens = transpose(tokens, (0, 2, 1))  # [B, n_tokens, D]
        for layer in self.transformer:
            tokens = layer(tokens, self.pos, train, rng)
        v_trans = repeat_time(tokens, self.cfg.token_stride)  # [B, bneck, D]
        bneck, tp = self.cfg.bottleneck_len, self.cfg.t_prime
        if bneck > tp:
            v_trans = transpose(avgpool1d(transpose(v_trans, (0, 2, 1)), bneck // tp), (0, 2, 1))
        elif tp > bneck:
            v_trans = repeat_time(v_trans, tp // bneck)

        for blk, skip in zip(self.decoder, reversed(skips)):
            h = blk(h, skip, train)
        v_unet = transpose(avgpool1d(h, self.cfg.out_stride), (0, 2, 1))  # [B, T', C0]

        fused = concat([v_unet, v_trans], axis=2)
        hidden = relu(self.head1(fused))
        if train and self.cfg.dropout > 0:
            hidden = dropout(hidden, self.cfg.dropout, rng=rng)
        logits = self.head2(hidden)
        return ForwardOutput(logits=logits, v_unet=v_unet, v_trans=v_trans)


def count_params(cfg: NetConfig) -> int:
    """Exact learnable scalar count for a configuration."""
    model = Model(cfg, np.random.default_rng(0))
    return sum(p.data.size for p in model.params())
