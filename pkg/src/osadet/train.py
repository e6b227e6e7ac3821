"""Training: default-window target construction, the weighted BCE +
smoothness objective, Adam with cosine annealing and gradient clipping, and
the masked-modality training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ChannelKind, EventInterval, EventLabel, ModalityMask, N_LABELS
from .dsp import EpochBatch
from .evaluate import MatchResult, match_events
from .events import DecodeConfig, decode
from .net import ForwardOutput, Model, NetConfig
from .tensor import Param, Tensor, relu, sigmoid, tabs, tmean, slice_time, sub, transpose
from .tensor.checkpoint import save_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-4
    lr_min: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    batch: int = 8
    epochs: int = 50
    weight_decay: float = 1e-5
    clip_norm: float = 5.0
    lambda_smooth: float = 0.1
    modality_dropout_p: float = 0.3
    class_weights: Optional[tuple[float, float, float, float]] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.lr0, self.lr_min, self.beta1, self.beta2, self.clip_norm) <= 0:
            raise ValueError("lr0, lr_min, beta1, beta2 and clip_norm must be positive")
        if self.batch < 1 or self.epochs < 1:
            raise ValueError("batch and epochs must be positive")
        if self.weight_decay < 0 or self.lambda_smooth < 0:
            raise ValueError("weight_decay and lambda_smooth must be nonnegative")
        if not 0.0 <= self.modality_dropout_p < 1.0:
            raise ValueError("modality_dropout_p must lie in [0, 1)")
        if self.class_weights is not None and (
            len(self.class_weights) != N_LABELS or any(w <= 0 for w in self.class_weights)
        ):
            raise ValueError("class_weights needs 4 positive entries")


# -- default windows -------------------------------------------------------------------

# Durations span the 3 s arousal floor through long apneas. The short end (4,
# 6 s) exists so every scoreable arousal/desaturation has a window at IoU
# >= 0.5, which the decode round trip needs; stride is duration/4.
DEFAULT_WINDOW_DURATIONS_S = (4.0, 6.0, 10.0, 15.0, 20.0, 30.0, 45.0, 60.0, 90.0, 120.0)


@dataclass(frozen=True)
class DefaultWindows:
    """Label-free interval templates tiling one epoch at several durations."""

    onsets: np.ndarray
    durations: np.ndarray
    epoch_s: float

    def __len__(self) -> int:
        return int(self.onsets.size)


def default_windows(epoch_s: float = 250.0, durations: Sequence[float] = DEFAULT_WINDOW_DURATIONS_S) -> DefaultWindows:
    onsets: list[float] = []
    durs: list[float] = []
    for d in durations:
        if d > epoch_s:
            continue
        stride = d / 4.0
        n = int(math.floor((epoch_s - d) / stride)) + 1
        for i in range(n):
            onsets.append(i * stride)
            durs.append(d)
    return DefaultWindows(np.asarray(onsets), np.asarray(durs), epoch_s)


def _window_ious(windows: DefaultWindows, onset: float, end: float) -> np.ndarray:
    w_on, w_end = windows.onsets, windows.onsets + windows.durations
    inter = np.minimum(w_end, end) - np.maximum(w_on, onset)
    union = np.maximum(w_end, end) - np.minimum(w_on, onset)
    return np.where(inter > 0, inter / union, 0.0)


def build_targets(
    events: Sequence[EventInterval],
    windows: DefaultWindows,
    t_prime: int,
    min_iou: float = 0.2,
) -> np.ndarray:
    """Paint each event's best-matching default window into its label column.

    Events are matched to their highest-IoU window (ties resolve to the
    earlier window index); events whose best IoU falls below min_iou are
    coverage failures: logged and skipped. Idempotent and independent of
    event order.
    """
    targets = np.zeros((t_prime, N_LABELS), dtype=np.float32)
    bin_s = windows.epoch_s / t_prime
    for ev in events:
        ious = _window_ious(windows, ev.onset_s, ev.end_s)
        j = int(np.argmax(ious))
        if ious[j] < min_iou:
            log.warning(
                "no default window reaches IoU %.2f for %s event [%.1f, %.1f]s (best %.3f); skipped",
                min_iou, ev.label.label, ev.onset_s, ev.end_s, float(ious[j]),
            )
            continue
        lo = int(round(windows.onsets[j] / bin_s))
        hi = int(round((windows.onsets[j] + windows.durations[j]) / bin_s))
        targets[max(0, lo) : min(t_prime, hi), int(ev.label)] = 1.0
    return targets


# -- losses ----------------------------------------------------------------------------


def bce_with_logits(logits: Tensor, targets: np.ndarray, weights: Optional[Sequence[float]] = None) -> Tensor:
    """Numerically fused weighted binary cross-entropy, averaged over every
    element: mean_k w_k [max(z,0) - z y + log(1 + e^-|z|)]."""
    targets = np.asarray(targets, dtype=logits.data.dtype)
    if logits.shape != targets.shape:
        raise ValueError(f"logits shape {logits.shape} != targets shape {targets.shape}")
    y = Tensor(targets)
    from .tensor.core import exp, log as tlog

    elem = relu(logits) - logits * y + tlog(exp(-tabs(logits)) + Tensor(np.asarray(1.0, dtype=logits.data.dtype)))
    if weights is not None:
        w = np.asarray(weights, dtype=logits.data.dtype)
        if w.shape != (logits.shape[-1],):
            raise ValueError(f"weights shape {w.shape} incompatible with {logits.shape}")
        elem = elem * Tensor(w)
    return tmean(elem)


def smoothness(seq: Tensor) -> Tensor:
    """Mean absolute adjacent-time difference of a [B, T', K] sequence."""
    if seq.ndim != 3 or seq.shape[1] < 2:
        raise ValueError(f"smoothness needs [B, T'>=2, K], got {seq.shape}")
    flat = transpose(seq, (0, 2, 1))  # [B, K, T']
    t = seq.shape[1]
    diff = sub(slice_time(flat, 1, t), slice_time(flat, 0, t - 1))
    return tmean(tabs(diff))


def total_loss(
    logits: Tensor,
    targets: np.ndarray,
    cfg: TrainConfig,
    weights: Optional[Sequence[float]] = None,
) -> tuple[Tensor, float, float]:
    """BCE + lambda * smoothness(sigmoid(logits)); returns the differentiable
    total plus the two component values for logging."""
    bce = bce_with_logits(logits, targets, weights)
    if cfg.lambda_smooth > 0:
        sm = smoothness(sigmoid(logits))
        total = bce + sm * Tensor(np.asarray(cfg.lambda_smooth, dtype=logits.data.dtype))
    else:
        sm = None
        total = bce
    return total, float(bce.data), 0.0 if sm is None else float(sm.data)


# -- optimizer -------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def for_params(cls, params: Sequence[Param]) -> "AdamState":
        return cls(
            m={p.name: np.zeros_like(p.data) for p in params},
            v={p.name: np.zeros_like(p.data) for p in params},
        )


def adam_step(
    params: Sequence[Param],
    state: AdamState,
    cfg: TrainConfig,
    t: int,
    lr: float,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update (t counts from 1). Weight decay enters
    as an additive lambda*theta gradient term."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    b1, b2 = cfg.beta1, cfg.beta2
    for p in params:
        g = p.grad
        if g is None:
            continue
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p.data = p.data - lr * mhat / (np.sqrt(vhat) + eps)


def cosine_lr(t: float, cfg: TrainConfig) -> float:
    """Cosine interpolation from lr0 at epoch 0 to lr_min at cfg.epochs."""
    if t < 0:
        raise ValueError(f"epoch index must be nonnegative, got {t}")
    if t >= cfg.epochs:
        return cfg.lr_min
    return cfg.lr_min + 0.5 * (cfg.lr0 - cfg.lr_min) * (1.0 + math.cos(math.pi * t / cfg.epochs))


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float = 5.0) -> tuple[list[np.ndarray], float]:
    """Scale the whole gradient set so its global L2 norm is at most max_norm
    (a projection: applying it twice changes nothing). Returns the new
    gradients and the pre-clip norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total <= max_norm or total == 0.0:
        return list(grads), total
    scale = max_norm / total
    return [g * scale for g in grads], total


def sample_mask(rng: np.random.Generator, p: float = 0.3, available: Optional[ModalityMask] = None) -> ModalityMask:
    """Independently drop each modality with probability p, resampling until
    at least one available channel survives."""
    avail = available.as_array() if available is not None else np.ones(3, dtype=bool)
    if not avail.any():
        raise ValueError("no channels available to sample a mask from")
    while True:
        keep = rng.random(3) >= p
        flags = keep & avail
        if flags.any():
            return ModalityMask(tuple(bool(f) for f in flags))


# -- training loop ---------------------------------------------------------------------


class DivergenceError(RuntimeError):
    pass


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_macro_f1: float

    def csv(self) -> str:
        return f"{self.epoch},{self.lr:.8e},{self.train_loss:.6f},{self.val_loss:.6f},{self.val_macro_f1:.4f}"


@dataclass
class TrainResult:
    model: Model
    history: list[EpochLog]
    best_epoch: int
    best_val_loss: float
    class_weights: tuple[float, float, float, float]


def inverse_frequency_weights(batches: Sequence[EpochBatch]) -> tuple[float, float, float, float]:
    """w_k proportional to 1/frequency of label k in the training targets,
    renormalized to mean 1; frequencies are floored to avoid blowups."""
    total = np.zeros(N_LABELS, dtype=np.float64)
    bins = 0
    for b in batches:
        if b.targets is None:
            raise ValueError("training epochs need targets before weight computation")
        total += b.targets.sum(axis=0)
        bins += b.targets.shape[0]
    freq = np.maximum(total / max(bins, 1), 1e-4)
    w = 1.0 / freq
    w *= N_LABELS / w.sum()
    return tuple(float(x) for x in w)


def _stack_batch(batches: Sequence[EpochBatch], idx: Sequence[int]) -> tuple[np.ndarray, np.ndarray, ModalityMask]:
    data = np.stack([batches[i].data for i in idx])
    targets = np.stack([batches[i].targets for i in idx])
    flags = np.ones(3, dtype=bool)
    for i in idx:
        flags &= batches[i].mask.as_array()
    return data, targets, ModalityMask(tuple(bool(f) for f in flags))


def _epoch_macro_f1(model: Model, batches: Sequence[EpochBatch], decode_cfg: DecodeConfig) -> float:
    results = []
    bin_s = None
    for b in batches:
        out = model.forward(b.data[None], b.mask, train=False)
        probs = 1.0 / (1.0 + np.exp(-out.logits.data[0]))
        t_prime = probs.shape[0]
        epoch_s = b.n_samples / 100.0
        valid_bins = int(round(t_prime * (b.valid_s / epoch_s)))
        pred = decode(probs[:valid_bins], decode_cfg, epoch_start_s=0.0,
                      duration_s=b.valid_s if valid_bins else epoch_s)
        results.append(match_events(pred, b.events, 0.2))
    return MatchResult.combine(results).macro_f1()


def train_loop(
    train_set: Sequence[EpochBatch],
    val_set: Sequence[EpochBatch],
    net_cfg: NetConfig,
    cfg: TrainConfig,
    log_path: Optional[str | Path] = None,
    checkpoint_path: Optional[str | Path] = None,
    decode_cfg: DecodeConfig = DecodeConfig(),
) -> TrainResult:
    """Full optimization run: shuffled minibatches, per-batch modality
    dropout, clipped Adam steps under a cosine schedule, per-epoch validation
    and best-validation checkpointing. Bitwise deterministic for a fixed
    seed. Aborts with the offending batch index if the loss goes non-finite.
    """
    if not train_set or not val_set:
        raise ValueError("training and validation splits must both be nonempty")
    for b in (*train_set, *val_set):
        if b.targets is None:
            raise ValueError("all epochs must carry targets (see build_targets)")

    rng = np.random.default_rng(cfg.seed)
    model = Model(net_cfg, rng)
    params = model.params()
    state = AdamState.for_params(params)
    weights = cfg.class_weights or inverse_frequency_weights(train_set)

    history: list[EpochLog] = []
    best_val = math.inf
    best_epoch = -1
    best_snapshot: Optional[dict[str, np.ndarray]] = None
    best_buffers: Optional[list[tuple[str, np.ndarray]]] = None
    step = 0

    lines: list[str] = []
    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(len(train_set))
        train_losses = []
        for start in range(0, len(order), cfg.batch):
            idx = order[start : start + cfg.batch]
            data, targets, avail = _stack_batch(train_set, idx)
            mask = sample_mask(rng, cfg.modality_dropout_p, available=avail)
            out = model.forward(data, mask, train=True, rng=rng)
            loss, bce_val, sm_val = total_loss(out.logits, targets, cfg, weights)
            val = float(loss.data)
            if not math.isfinite(val):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch} "
                    f"(bce={bce_val}, smooth={sm_val})"
                )
            model.zero_grad()
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            grads, _ = clip_gradients(grads, cfg.clip_norm)
            for p, g in zip(params, grads):
                p.value.grad = g
            step += 1
            adam_step(params, state, cfg, step, lr)
            train_losses.append(val)

        val_losses = []
        for b in val_set:
            out = model.forward(b.data[None], b.mask, train=False)
            loss, _, _ = total_loss(out.logits, b.targets[None], cfg, weights)
            val_losses.append(float(loss.data))
        val_loss = float(np.mean(val_losses))
        val_f1 = _epoch_macro_f1(model, val_set, decode_cfg)

        entry = EpochLog(epoch, lr, float(np.mean(train_losses)), val_loss, val_f1)
        history.append(entry)
        lines.append(entry.csv())
        log.info("epoch %d lr %.2e train %.4f val %.4f f1 %.3f", epoch, lr, entry.train_loss, val_loss, val_f1)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_snapshot = {p.name: p.data.copy() for p in params}
            best_buffers = [(name, arr.copy()) for name, arr in model.buffers()]

    assert best_snapshot is not None
    for p in params:
        p.data = best_snapshot[p.name]
    model.load_buffers(dict(best_buffers))

    if checkpoint_path is not None:
        save_params(checkpoint_path, params, model.buffers())
    if log_path is not None:
        Path(log_path).write_text("\n".join(lines) + "\n")

    return TrainResult(model, history, best_epoch, best_val, tuple(weights))
