"""Evaluation stack: event matching and F1-vs-IoU curves, AHI arithmetic,
severity grading, screening, confusion matrices and agreement statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import EventInterval, EventLabel, interval_iou
from .synth import estimated_ahi_events

DEFAULT_IOU_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(1, 10))


class UndefinedAhiError(ValueError):
    pass


@dataclass(frozen=True)
class MatchResult:
    """Per-label one-to-one matching between predictions and ground truth."""

    tp: dict[EventLabel, int]
    fp: dict[EventLabel, int]
    fn: dict[EventLabel, int]
    pairs: tuple[tuple[EventLabel, int, int, float], ...] = ()  # (label, truth idx, pred idx, IoU)

    def precision(self, label: EventLabel) -> float:
        denom = self.tp[label] + self.fp[label]
        return self.tp[label] / denom if denom else 0.0

    def recall(self, label: EventLabel) -> float:
        denom = self.tp[label] + self.fn[label]
        return self.tp[label] / denom if denom else 0.0

    def f1(self, label: EventLabel) -> float:
        p, r = self.precision(label), self.recall(label)
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def macro_f1(self) -> float:
        """Unweighted mean F1 over the classes present in the ground truth."""
        present = [lab for lab in EventLabel if self.tp[lab] + self.fn[lab] > 0]
        if not present:
            return 0.0
        return float(np.mean([self.f1(lab) for lab in present]))

    def pooled_f1(self) -> float:
        tp = sum(self.tp.values())
        fp = sum(self.fp.values())
        fn = sum(self.fn.values())
        return 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0

    @staticmethod
    def combine(results: Iterable["MatchResult"]) -> "MatchResult":
        tp = {lab: 0 for lab in EventLabel}
        fp = {lab: 0 for lab in EventLabel}
        fn = {lab: 0 for lab in EventLabel}
        for r in results:
            for lab in EventLabel:
                tp[lab] += r.tp[lab]
                fp[lab] += r.fp[lab]
                fn[lab] += r.fn[lab]
        return MatchResult(tp, fp, fn)


def match_events(
    pred: Sequence[EventInterval], truth: Sequence[EventInterval], iou_threshold: float
) -> MatchResult:
    """Greedy one-to-one matching in descending IoU, per label. Pairs at or
    above the threshold become TPs; leftover predictions are FPs and leftover
    truths FNs."""
    tp = {lab: 0 for lab in EventLabel}
    fp = {lab: 0 for lab in EventLabel}
    fn = {lab: 0 for lab in EventLabel}
    pairs: list[tuple[EventLabel, int, int, float]] = []
    for lab in EventLabel:
        t_idx = [i for i, e in enumerate(truth) if e.label == lab]
        p_idx = [i for i, e in enumerate(pred) if e.label == lab]
        candidates = []
        for ti in t_idx:
            for pi in p_idx:
                iou = interval_iou(truth[ti], pred[pi])
                if iou >= iou_threshold and iou > 0:
                    candidates.append((iou, ti, pi))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        used_t: set[int] = set()
        used_p: set[int] = set()
        for iou, ti, pi in candidates:
            if ti in used_t or pi in used_p:
                continue
            used_t.add(ti)
            used_p.add(pi)
            pairs.append((lab, ti, pi, iou))
        tp[lab] = len(used_t)
        fn[lab] = len(t_idx) - len(used_t)
        fp[lab] = len(p_idx) - len(used_p)
    return MatchResult(tp, fp, fn, tuple(pairs))


def f1_curve(
    pred: Sequence[EventInterval],
    truth: Sequence[EventInterval],
    thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
) -> dict[EventLabel, list[float]]:
    """Per-label F1 at each IoU threshold. Greedy matching makes each curve
    nonincreasing in the threshold, which is asserted."""
    curves: dict[EventLabel, list[float]] = {lab: [] for lab in EventLabel}
    for thr in thresholds:
        m = match_events(pred, truth, thr)
        for lab in EventLabel:
            curves[lab].append(m.f1(lab))
    for lab, vals in curves.items():
        for a, b in zip(vals, vals[1:]):
            assert b <= a + 1e-12, f"F1 curve for {lab.label} increased with threshold"
    return curves


# -- AHI, severity, screening ---------------------------------------------------------


def compute_ahi(events: Sequence[EventInterval], total_sleep_time_min: float) -> float:
    """(apnea count + hypopnea count) per hour of total sleep time."""
    if total_sleep_time_min is None or total_sleep_time_min <= 0:
        raise UndefinedAhiError(f"total sleep time must be positive, got {total_sleep_time_min}")
    n = sum(1 for e in events if e.label in (EventLabel.APNEA, EventLabel.HYPOPNEA))
    return n / (total_sleep_time_min / 60.0)


class SeverityClass(Enum):
    NONE = "none"
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"

    @property
    def index(self) -> int:
        return _SEVERITY_ORDER.index(self)


_SEVERITY_ORDER = [SeverityClass.NONE, SeverityClass.MILD, SeverityClass.MODERATE, SeverityClass.SEVERE]


def severity(ahi: float) -> SeverityClass:
    """Grade by AHI with inclusive lower bounds: <5 none, 5-15 mild,
    15-30 moderate, >=30 severe."""
    if ahi < 0:
        raise ValueError(f"AHI cannot be negative, got {ahi}")
    if ahi < 5.0:
        return SeverityClass.NONE
    if ahi < 15.0:
        return SeverityClass.MILD
    if ahi < 30.0:
        return SeverityClass.MODERATE
    return SeverityClass.SEVERE


class ScreeningClass(Enum):
    BELOW = "below"
    MODERATE_OR_SEVERE = "moderate_or_severe"


def screen(ahi: float) -> ScreeningClass:
    """Binary moderate-to-severe screen at the AHI = 15 threshold (inclusive)."""
    if ahi < 0:
        raise ValueError(f"AHI cannot be negative, got {ahi}")
    return ScreeningClass.MODERATE_OR_SEVERE if ahi >= 15.0 else ScreeningClass.BELOW


def estimated_ahi_eeg_only(
    pred_events: Sequence[EventInterval], tst_min: float, assoc_window_s: float = 30.0
) -> float:
    """Estimated AHI from predicted events alone: count apneas plus
    arousal/desaturation-accompanied hypopneas."""
    return compute_ahi(estimated_ahi_events(pred_events, assoc_window_s), tst_min)


# -- aggregate statistics --------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray = field(repr=False)  # rows = truth, cols = prediction

    @property
    def row_percent(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pct = 100.0 * self.counts / totals
        return np.where(totals > 0, pct, 0.0)

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def f1(self, i: int) -> float:
        tp = self.counts[i, i]
        fp = self.counts[:, i].sum() - tp
        fn = self.counts[i, :].sum() - tp
        return float(2 * tp / (2 * tp + fp + fn)) if 2 * tp + fp + fn else 0.0

    def macro_f1(self) -> float:
        present = [i for i in range(len(self.classes)) if self.counts[i].sum() > 0]
        if not present:
            return 0.0
        return float(np.mean([self.f1(i) for i in present]))


def confusion_matrix(preds: Sequence, truths: Sequence, classes: Sequence) -> ConfusionMatrix:
    if len(preds) != len(truths):
        raise ValueError(f"prediction/truth length mismatch: {len(preds)} vs {len(truths)}")
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(preds, truths):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(tuple(classes), counts)


@dataclass(frozen=True)
class RegressionStats:
    r2: float
    bias: float
    loa_low: float
    loa_high: float


def regression_stats(pred_ahi: Sequence[float], true_ahi: Sequence[float]) -> RegressionStats:
    """Agreement statistics: R^2 = 1 - SS_res/SS_tot plus Bland-Altman bias
    and 95% limits of agreement (bias +/- 1.96 sample SD of differences)."""
    pred = np.asarray(pred_ahi, dtype=np.float64)
    true = np.asarray(true_ahi, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("pred/true must be 1-d arrays of equal length")
    if pred.size < 3:
        raise ValueError(f"need at least 3 pairs, got {pred.size}")
    ss_tot = float(((true - true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined: zero variance in ground truth")
    ss_res = float(((pred - true) ** 2).sum())
    diff = pred - true
    bias = float(diff.mean())
    sd = float(diff.std(ddof=1))
    return RegressionStats(
        r2=1.0 - ss_res / ss_tot,
        bias=bias,
        loa_low=bias - 1.96 * sd,
        loa_high=bias + 1.96 * sd,
    )
