"""Shared domain types: signals, scored events, modality masks, interval algebra.

Everything downstream (preprocessing, the synthetic generator, the network,
decoding and evaluation) speaks in terms of these types. All of them are
immutable value types and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np


class ChannelKind(IntEnum):
    """The three input modalities. Index order is fixed and used for mask
    and array-row indexing everywhere."""

    EEG = 0
    AIRFLOW = 1
    SPO2 = 2

    @property
    def label(self) -> str:
        return _CHANNEL_NAMES[self]


_CHANNEL_NAMES = {ChannelKind.EEG: "eeg", ChannelKind.AIRFLOW: "airflow", ChannelKind.SPO2: "spo2"}
_CHANNEL_BY_NAME = {v: k for k, v in _CHANNEL_NAMES.items()}

N_CHANNELS = len(ChannelKind)


def channel_from_name(name: str) -> ChannelKind:
    try:
        return _CHANNEL_BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown channel name {name!r}; expected one of {sorted(_CHANNEL_BY_NAME)}") from None


class EventLabel(IntEnum):
    """Event classes, in the fixed column order of the 4-channel output map."""

    APNEA = 0
    HYPOPNEA = 1
    AROUSAL = 2
    DESATURATION = 3

    @property
    def label(self) -> str:
        return _EVENT_NAMES[self]


_EVENT_NAMES = {
    EventLabel.APNEA: "apnea",
    EventLabel.HYPOPNEA: "hypopnea",
    EventLabel.AROUSAL: "arousal",
    EventLabel.DESATURATION: "desaturation",
}
_EVENT_BY_NAME = {v: k for k, v in _EVENT_NAMES.items()}

N_LABELS = len(EventLabel)

RESPIRATORY_LABELS = (EventLabel.APNEA, EventLabel.HYPOPNEA)


def event_label_from_name(name: str) -> EventLabel:
    try:
        return _EVENT_BY_NAME[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown event label {name!r}; expected one of {sorted(_EVENT_BY_NAME)}") from None


@dataclass(frozen=True)
class EventInterval:
    """A scored event: (center time, duration, label), used both for
    ground-truth annotations (score 1.0) and model predictions.
    """

    center_s: float
    duration_s: float
    label: EventLabel
    score: float = 1.0

    def __post_init__(self) -> None:
        if not self.duration_s > 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")
        if self.onset_s < -1e-9:
            raise ValueError(
                f"event extends before time zero (center {self.center_s}, duration {self.duration_s})"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    @property
    def onset_s(self) -> float:
        return self.center_s - self.duration_s / 2.0

    @property
    def end_s(self) -> float:
        return self.center_s + self.duration_s / 2.0

    @classmethod
    def from_onset(cls, onset_s: float, duration_s: float, label: EventLabel, score: float = 1.0) -> "EventInterval":
        """Build from (onset, duration); exact inverse of onset_end."""
        return cls(center_s=onset_s + duration_s / 2.0, duration_s=duration_s, label=label, score=score)

    def clipped(self, lo_s: float, hi_s: float) -> Optional["EventInterval"]:
        """Intersect with [lo_s, hi_s]; None if the overlap is empty."""
        onset = max(self.onset_s, lo_s)
        end = min(self.end_s, hi_s)
        if end - onset <= 0:
            return None
        return EventInterval.from_onset(onset, end - onset, self.label, self.score)

    def shifted(self, offset_s: float) -> "EventInterval":
        return EventInterval(self.center_s + offset_s, self.duration_s, self.label, self.score)


def onset_end(e: EventInterval) -> tuple[float, float]:
    """(onset, end) in seconds for an event stored as (center, duration)."""
    return (e.onset_s, e.end_s)


def interval_iou(a: EventInterval, b: EventInterval) -> float:
    """Temporal intersection-over-union of two intervals. Labels are ignored;
    disjoint intervals give 0."""
    inter = min(a.end_s, b.end_s) - max(a.onset_s, b.onset_s)
    if inter <= 0:
        return 0.0
    union = max(a.end_s, b.end_s) - min(a.onset_s, b.onset_s)
    return inter / union


@dataclass(frozen=True)
class ModalityMask:
    """Per-channel availability flags, indexed by ChannelKind."""

    flags: tuple[bool, bool, bool]

    def __post_init__(self) -> None:
        if len(self.flags) != N_CHANNELS:
            raise ValueError(f"expected {N_CHANNELS} flags, got {len(self.flags)}")

    @classmethod
    def all_on(cls) -> "ModalityMask":
        return cls((True, True, True))

    @classmethod
    def of(cls, *kinds: ChannelKind) -> "ModalityMask":
        return cls(tuple(k in kinds for k in ChannelKind))  # type: ignore[arg-type]

    @classmethod
    def from_spec(cls, spec: str) -> "ModalityMask":
        """Parse a mask spec such as "eeg", "airflow+spo2" or "all"."""
        spec = spec.strip().lower()
        if spec == "all":
            return cls.all_on()
        kinds = [channel_from_name(part) for part in spec.split("+") if part]
        if not kinds:
            raise ValueError(f"empty mask spec {spec!r}")
        return cls.of(*kinds)

    def __getitem__(self, kind: ChannelKind) -> bool:
        return self.flags[int(kind)]

    @property
    def any(self) -> bool:
        return any(self.flags)

    def active(self) -> tuple[ChannelKind, ...]:
        return tuple(k for k in ChannelKind if self.flags[int(k)])

    def as_array(self) -> np.ndarray:
        return np.asarray(self.flags, dtype=bool)

    def spec(self) -> str:
        if all(self.flags):
            return "all"
        return "+".join(k.label for k in self.active())


@dataclass(frozen=True)
class SampleSeries:
    """One channel of uniformly sampled data."""

    kind: ChannelKind
    rate_hz: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate_hz

    def with_samples(self, samples: np.ndarray, rate_hz: Optional[float] = None) -> "SampleSeries":
        return SampleSeries(self.kind, self.rate_hz if rate_hz is None else rate_hz, samples)


@dataclass(frozen=True)
class Recording:
    """A (possibly partial) multichannel recording plus its annotations.

    total_sleep_time_min is None when the recording carries no usable sleep
    time; quality control treats that as an exclusion reason.
    """

    id: str
    channels: tuple[SampleSeries, ...]
    total_sleep_time_min: Optional[float] = None
    annotations: tuple[EventInterval, ...] = ()

    def __post_init__(self) -> None:
        kinds = [s.kind for s in self.channels]
        if len(set(kinds)) != len(kinds):
            raise ValueError(f"duplicate channel kinds in recording {self.id!r}: {kinds}")
        if self.total_sleep_time_min is not None:
            if self.total_sleep_time_min < 0:
                raise ValueError("total_sleep_time_min must be nonnegative")
            if self.channels and self.total_sleep_time_min > self.duration_s / 60.0 + 1e-6:
                raise ValueError(
                    f"total_sleep_time_min ({self.total_sleep_time_min}) exceeds recording "
                    f"duration ({self.duration_s / 60.0:.2f} min)"
                )
        object.__setattr__(self, "annotations", tuple(self.annotations))

    def channel(self, kind: ChannelKind) -> Optional[SampleSeries]:
        for s in self.channels:
            if s.kind == kind:
                return s
        return None

    @property
    def duration_s(self) -> float:
        if not self.channels:
            return 0.0
        return max(s.duration_s for s in self.channels)

    def with_channels(self, channels: tuple[SampleSeries, ...]) -> "Recording":
        return Recording(self.id, channels, self.total_sleep_time_min, self.annotations)

    def events(self, label: Optional[EventLabel] = None) -> tuple[EventInterval, ...]:
        if label is None:
            return self.annotations
        return tuple(e for e in self.annotations if e.label == label)
