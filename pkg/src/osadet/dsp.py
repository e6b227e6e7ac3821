"""Signal preprocessing: resampling, z-score normalization, EEG bandpass,
quality control, and segmentation into fixed-length epochs.

The pipeline order is fixed: resample -> bandpass (EEG only) -> zscore ->
segment. Z-score statistics are per-recording. All functions are pure; the
amplitude-sensitive oracle scorer runs on raw (pre-normalization) signals
and never sees these outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy import signal as sps

from .core import ChannelKind, EventInterval, ModalityMask, N_CHANNELS, Recording, SampleSeries

DEFAULT_RATE_HZ = 100.0
DEFAULT_EPOCH_S = 250.0
EEG_BAND_HZ = (0.5, 45.0)


class DegenerateSignalError(ValueError):
    """Zero-variance channel: the recording is flagged for exclusion."""


class TooShortError(ValueError):
    pass


@dataclass(frozen=True)
class PreprocessConfig:
    target_hz: float = DEFAULT_RATE_HZ
    epoch_s: float = DEFAULT_EPOCH_S
    stride_s: float = DEFAULT_EPOCH_S
    z_limit: float = 6.0
    artifact_budget: float = 0.05
    required_channels: tuple[str, ...] = ("eeg", "airflow", "spo2")

    def __post_init__(self) -> None:
        if self.target_hz <= 0 or self.epoch_s <= 0 or self.stride_s <= 0:
            raise ValueError("target_hz, epoch_s and stride_s must be positive")
        if self.z_limit <= 0:
            raise ValueError("z_limit must be positive")
        if not 0 < self.artifact_budget < 1:
            raise ValueError("artifact_budget must lie in (0, 1)")


def resample(series: SampleSeries, target_hz: float) -> SampleSeries:
    """Polyphase (windowed-sinc) resampling to target_hz.

    Duration is preserved to within one output sample; a pure tone below
    both Nyquist rates keeps its amplitude to within 1%.
    """
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    ratio = Fraction(target_hz) / Fraction(series.rate_hz)
    ratio = ratio.limit_denominator(10_000)
    if ratio == 1:
        return series
    out = sps.resample_poly(series.samples, ratio.numerator, ratio.denominator)
    return SampleSeries(series.kind, target_hz, out)


def zscore(series: SampleSeries) -> SampleSeries:
    """Normalize to mean 0 / population std 1."""
    if len(series) < 2:
        raise DegenerateSignalError(f"{series.kind.label}: need at least 2 samples to z-score")
    mu = float(series.samples.mean())
    sd = float(series.samples.std())
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateSignalError(f"{series.kind.label}: zero-variance signal cannot be z-scored")
    return series.with_samples((series.samples - mu) / sd)


_SOS_CACHE: dict[tuple[float, float, float], np.ndarray] = {}


def _bandpass_sos(lo: float, hi: float, fs: float) -> np.ndarray:
    key = (lo, hi, fs)
    if key not in _SOS_CACHE:
        _SOS_CACHE[key] = sps.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    return _SOS_CACHE[key]


def bandpass_eeg(series: SampleSeries) -> SampleSeries:
    """Zero-phase 0.5-45 Hz bandpass for EEG at the pipeline rate.

    Realized as a forward-backward order-4 recursive filter, so event timing
    is preserved (no group delay) at the cost of doubled attenuation.
    """
    if series.kind is not ChannelKind.EEG:
        raise ValueError(f"bandpass_eeg expects an EEG channel, got {series.kind.label}")
    if abs(series.rate_hz - DEFAULT_RATE_HZ) > 1e-9:
        raise ValueError(f"bandpass_eeg expects {DEFAULT_RATE_HZ} Hz input, got {series.rate_hz}")
    sos = _bandpass_sos(EEG_BAND_HZ[0], EEG_BAND_HZ[1], series.rate_hz)
    out = sps.sosfiltfilt(sos, series.samples)
    return series.with_samples(out)


@dataclass(frozen=True)
class QualityResult:
    accepted: bool
    reason: Optional[str] = None

    def __bool__(self) -> bool:
        return self.accepted


def quality_check(rec: Recording, cfg: PreprocessConfig = PreprocessConfig()) -> QualityResult:
    """Exclusion screen: missing required channels, missing sleep time, or an
    artifact fraction (|z| > z_limit) over budget all reject the recording."""
    for name in cfg.required_channels:
        kind = ChannelKind[name.upper()] if not isinstance(name, ChannelKind) else name
        if rec.channel(kind) is None:
            return QualityResult(False, f"missing channel: {kind.label}")
    if rec.total_sleep_time_min is None:
        return QualityResult(False, "missing total sleep time")
    for series in rec.channels:
        x = series.samples
        if not np.all(np.isfinite(x)):
            return QualityResult(False, f"non-finite samples in {series.kind.label}")
        if x.std() == 0.0:
            return QualityResult(False, f"degenerate (constant) signal in {series.kind.label}")
        # robust z (median/MAD): a moment-based z can never put more than
        # 1/z_limit^2 of the samples beyond z_limit, so gross artifacts would
        # saturate the scale estimate instead of tripping the budget
        med = np.median(x)
        scale = 1.4826 * np.median(np.abs(x - med))
        if scale == 0.0:
            scale = x.std()
        frac = float(np.mean(np.abs((x - med) / scale) > cfg.z_limit))
        if frac > cfg.artifact_budget:
            return QualityResult(
                False,
                f"artifact budget exceeded in {series.kind.label}: "
                f"{frac:.1%} of samples beyond |z| = {cfg.z_limit} (budget {cfg.artifact_budget:.1%})",
            )
    return QualityResult(True)


def preprocess_recording(rec: Recording, cfg: PreprocessConfig = PreprocessConfig()) -> Recording:
    """resample -> bandpass (EEG only) -> zscore, per channel.

    Channels are trimmed to a common length afterwards (resampling different
    input rates can differ by one sample).
    """
    processed = []
    for series in rec.channels:
        s = resample(series, cfg.target_hz)
        if s.kind is ChannelKind.EEG:
            s = bandpass_eeg(s)
        processed.append(zscore(s))
    if processed:
        n = min(len(s) for s in processed)
        processed = [s.with_samples(s.samples[:n]) if len(s) != n else s for s in processed]
    return rec.with_channels(tuple(processed))


@dataclass(frozen=True)
class EpochBatch:
    """One fixed-length multimodal window: data [3, T] in ChannelKind order,
    zero-filled where the mask is off, plus epoch-relative annotations.

    valid_s is the unpadded span; the final epoch of a recording is
    zero-padded on the right up to epoch_s.
    """

    data: np.ndarray = field(repr=False)
    mask: ModalityMask
    start_s: float
    valid_s: float
    events: tuple[EventInterval, ...] = ()
    targets: Optional[np.ndarray] = None
    rate_hz: float = DEFAULT_RATE_HZ

    def __post_init__(self) -> None:
        if self.data.ndim != 2 or self.data.shape[0] != N_CHANNELS:
            raise ValueError(f"epoch data must be [{N_CHANNELS}, T], got {self.data.shape}")
        for k in ChannelKind:
            if not self.mask[k] and np.any(self.data[int(k)]):
                raise ValueError(f"masked channel {k.label} must be identically zero")
        if self.targets is not None and not np.isin(self.targets, (0.0, 1.0)).all():
            raise ValueError("targets must be binary")

    @property
    def n_samples(self) -> int:
        return int(self.data.shape[1])

    def with_targets(self, targets: np.ndarray) -> "EpochBatch":
        return replace(self, targets=targets)


def segment(rec: Recording, epoch_s: float = DEFAULT_EPOCH_S, stride_s: Optional[float] = None) -> list[EpochBatch]:
    """Tile a preprocessed recording into epochs of epoch_s at the given
    stride (default: non-overlapping). Annotations are clipped to each
    epoch's span and shifted to epoch-relative time."""
    stride_s = epoch_s if stride_s is None else stride_s
    if not rec.channels:
        raise TooShortError(f"recording {rec.id!r} has no channels")
    rate = rec.channels[0].rate_hz
    for s in rec.channels:
        if abs(s.rate_hz - rate) > 1e-9:
            raise ValueError(f"segment needs a uniform rate; got {s.rate_hz} vs {rate}")
    n = min(len(s) for s in rec.channels)
    duration_s = n / rate
    if duration_s < 10.0:
        raise TooShortError(f"recording {rec.id!r} is {duration_s:.1f} s long; need at least 10 s")

    n_epoch = int(round(epoch_s * rate))
    n_stride = int(round(stride_s * rate))
    if n_stride < 1:
        raise ValueError("stride too small")

    mask = ModalityMask(tuple(rec.channel(k) is not None for k in ChannelKind))
    rows = np.zeros((N_CHANNELS, n), dtype=np.float32)
    for k in ChannelKind:
        series = rec.channel(k)
        if series is not None:
            rows[int(k)] = series.samples[:n]

    epochs: list[EpochBatch] = []
    start = 0
    while start < n:
        stop = min(start + n_epoch, n)
        data = np.zeros((N_CHANNELS, n_epoch), dtype=np.float32)
        data[:, : stop - start] = rows[:, start:stop]
        start_s = start / rate
        valid_s = (stop - start) / rate
        clipped = []
        for ev in rec.annotations:
            c = ev.clipped(start_s, start_s + valid_s)
            if c is not None:
                clipped.append(c.shifted(-start_s))
        epochs.append(EpochBatch(data=data, mask=mask, start_s=start_s, valid_s=valid_s, events=tuple(clipped)))
        start += n_stride
    return epochs
