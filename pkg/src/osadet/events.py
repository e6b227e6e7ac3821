"""Decoding dense probability maps into discrete events, non-maximum
suppression, and cross-epoch stitching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EventInterval, EventLabel, N_LABELS, interval_iou

# AASM duration floors per label (apnea, hypopnea, arousal, desaturation)
DEFAULT_MIN_DURATION_S = (10.0, 10.0, 3.0, 3.0)


@dataclass(frozen=True)
class DecodeConfig:
    prob_threshold: float = 0.5
    min_duration_s: tuple[float, float, float, float] = DEFAULT_MIN_DURATION_S
    merge_gap_s: float = 1.0
    nms_iou: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.prob_threshold < 1.0:
            raise ValueError(f"prob_threshold must lie in (0, 1), got {self.prob_threshold}")
        if len(self.min_duration_s) != N_LABELS or any(d < 0 for d in self.min_duration_s):
            raise ValueError("min_duration_s needs one nonnegative floor per label")
        if self.merge_gap_s < 0:
            raise ValueError("merge_gap_s must be nonnegative")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ValueError(f"nms_iou must lie in (0, 1], got {self.nms_iou}")


def _binary_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) index runs of True."""
    if not mask.any():
        return []
    d = np.diff(mask.astype(np.int8))
    starts = list(np.where(d == 1)[0] + 1)
    stops = list(np.where(d == -1)[0] + 1)
    if mask[0]:
        starts.insert(0, 0)
    if mask[-1]:
        stops.append(len(mask))
    return list(zip(starts, stops))


def decode(probs: np.ndarray, cfg: DecodeConfig = DecodeConfig(), epoch_start_s: float = 0.0,
           duration_s: float = 250.0) -> list[EventInterval]:
    """Threshold each label column, merge runs separated by less than
    merge_gap_s, drop runs under the label's duration floor, and emit events
    scored by the mean probability over the merged span."""
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[1] != N_LABELS:
        raise ValueError(f"probability map must be [T', {N_LABELS}], got {probs.shape}")
    t_bins = probs.shape[0]
    if t_bins < 1:
        return []
    bin_s = duration_s / t_bins
    out: list[EventInterval] = []
    for label in EventLabel:
        col = probs[:, int(label)]
        runs = _binary_runs(col >= cfg.prob_threshold)
        if not runs:
            continue
        merged = [list(runs[0])]
        for start, stop in runs[1:]:
            if (start - merged[-1][1]) * bin_s < cfg.merge_gap_s:
                merged[-1][1] = stop
            else:
                merged.append([start, stop])
        floor = cfg.min_duration_s[int(label)]
        for start, stop in merged:
            dur = (stop - start) * bin_s
            if dur < floor:
                continue
            score = float(col[start:stop].mean())
            out.append(
                EventInterval.from_onset(epoch_start_s + start * bin_s, dur, label, min(1.0, max(0.0, score)))
            )
    out.sort(key=lambda e: (e.onset_s, int(e.label)))
    return out


def nms(events: Sequence[EventInterval], iou_threshold: float = 0.5) -> list[EventInterval]:
    """Greedy score-descending suppression, per label: keep the best-scored
    event, drop same-label events overlapping a kept one with IoU strictly
    above the threshold. Cross-label pairs never suppress each other.
    Ties break toward earlier onset, then longer duration."""
    kept: list[EventInterval] = []
    for label in EventLabel:
        pool = sorted(
            (e for e in events if e.label == label),
            key=lambda e: (-e.score, e.onset_s, -e.duration_s),
        )
        chosen: list[EventInterval] = []
        for e in pool:
            if all(interval_iou(e, k) <= iou_threshold for k in chosen):
                chosen.append(e)
        kept.extend(chosen)
    kept.sort(key=lambda e: (e.onset_s, int(e.label)))
    return kept


def stitch_epochs(per_epoch: Sequence[tuple[float, Sequence[EventInterval]]],
                  merge_gap_s: float = 1.0) -> list[EventInterval]:
    """Merge same-label events abutting across epoch boundaries (gap under
    merge_gap_s) into single events; scores combine duration-weighted.

    Epoch starts must be in increasing order with a uniform stride.
    """
    starts = [s for s, _ in per_epoch]
    if any(b <= a for a, b in zip(starts, starts[1:])):
        raise ValueError("epochs must be in strictly increasing temporal order")
    strides = [round(b - a, 9) for a, b in zip(starts, starts[1:])]
    if len(set(strides)) > 1:
        raise ValueError(f"inconsistent epoch stride: {sorted(set(strides))}")
    merged: list[EventInterval] = []
    for label in EventLabel:
        stream = sorted(
            (e for _, events in per_epoch for e in events if e.label == label),
            key=lambda e: e.onset_s,
        )
        for e in stream:
            if merged and merged[-1].label == label and e.onset_s - merged[-1].end_s < merge_gap_s:
                prev = merged[-1]
                onset = prev.onset_s
                end = max(prev.end_s, e.end_s)
                total = prev.duration_s + e.duration_s
                score = (prev.score * prev.duration_s + e.score * e.duration_s) / total
                merged[-1] = EventInterval.from_onset(onset, end - onset, label, score)
            else:
                merged.append(e)
    merged.sort(key=lambda e: (e.onset_s, int(e.label)))
    return merged
