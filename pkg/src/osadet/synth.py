"""Synthetic PSG generation and rule-based oracle scoring.

The generator writes three synchronized channels at 100 Hz:

* airflow  -- quasi-periodic respiration whose peak amplitude drops by a
  configured fraction during apnea (>= 90%) and hypopnea (30-90%) events;
* SpO2     -- raw oxygen saturation in percent, with delayed desaturation
  episodes following respiratory events (oxygen lags airflow);
* EEG      -- 1/f-shaped background plus 10 Hz alpha bursts, with arousal
  episodes of fast (> 16 Hz) activity.

Every generated event is annotated exactly, and every generated event is
scoreable by the standard amplitude/desaturation/arousal rules, so the
oracle scorer below can be held to a closed-loop F1 of ~1 against the
embedded ground truth.

The oracle scorer measures what a human scorer would: peak-amplitude drops
of the airflow envelope against a trailing 60 s median baseline, >= 3%
saturation drops against the same style of baseline, and fast-band EEG
power bursts. Hypopneas qualify only when a desaturation or arousal onset
falls inside the association window after the event ends; apneas always
qualify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from .core import ChannelKind, EventInterval, EventLabel, Recording, SampleSeries

FS_HZ = 100.0

# Events never start inside the lead-in (baselines warm up) or run into the
# tail margin (desaturations need room to resolve).
_LEAD_IN_S = 90.0
_TAIL_S = 90.0

# Generated standalone arousals/desaturations keep clear of respiratory
# events so accidental associations cannot blur the accompaniment fraction.
_RESP_CLEAR_BEFORE_S = 40.0
_AROUSAL_CLEAR_AFTER_S = 40.0
_DESAT_CLEAR_AFTER_S = 80.0

# Documented noise ceiling for the closed-loop guarantee: with
# noise_std <= 0.05 the scorer reproduces the annotations at F1 >= 0.99.
CLOSED_LOOP_NOISE_STD = 0.05


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for one synthetic recording.

    event_rate_per_h is indexed by EventLabel; for arousal and desaturation
    it is the rate of *standalone* events — respiratory events additionally
    attach their own physiologic consequences (see the attach_* fields).
    """

    duration_min: float = 20.0
    seed: int = 0
    event_rate_per_h: tuple[float, float, float, float] = (12.0, 10.0, 8.0, 3.0)
    apnea_drop_frac: float = 0.95
    hypopnea_drop_frac: float = 0.5
    desat_drop_pct: float = 4.0
    desat_delay_s: float = 10.0
    arousal_min_s: float = 5.0
    baseline_spo2_pct: float = 97.0
    noise_std: float = 0.03
    resp_rate_hz: float = 0.25
    hypopnea_assoc_prob: float = 1.0
    apnea_desat_prob: float = 0.85
    apnea_arousal_prob: float = 0.4

    def __post_init__(self) -> None:
        if self.duration_min < 10.0:
            raise ValueError(f"duration_min must be at least 10 (got {self.duration_min})")
        if len(self.event_rate_per_h) != 4 or any(r < 0 for r in self.event_rate_per_h):
            raise ValueError("event_rate_per_h needs 4 nonnegative rates (apnea, hypopnea, arousal, desat)")
        if self.apnea_drop_frac < 0.9:
            raise ValueError("apnea_drop_frac must be >= 0.9")
        if not 0.3 <= self.hypopnea_drop_frac < 0.9:
            raise ValueError("hypopnea_drop_frac must lie in [0.3, 0.9)")
        if self.desat_drop_pct < 3.0:
            raise ValueError("desat_drop_pct must be >= 3")
        if self.desat_delay_s <= 0:
            raise ValueError("desat_delay_s must be positive")
        if self.arousal_min_s < 3.0:
            raise ValueError("arousal_min_s must be >= 3")
        if not 80.0 < self.baseline_spo2_pct <= 100.0:
            raise ValueError("baseline_spo2_pct must lie in (80, 100]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not 0.0 <= self.hypopnea_assoc_prob <= 1.0:
            raise ValueError("hypopnea_assoc_prob must lie in [0, 1]")

    def rate(self, label: EventLabel) -> float:
        return self.event_rate_per_h[int(label)]


# Loose per-cohort rate presets (apnea, hypopnea, standalone arousal,
# standalone desaturation per hour). The apnea:hypopnea split follows each
# cohort's published event mix; absolute levels are kept desk-scale.
COHORT_PRESETS: dict[str, tuple[float, float, float, float]] = {
    "mros": (7.8, 13.5, 10.0, 3.0),
    "shhs": (2.4, 15.5, 8.0, 3.0),
    "mesa": (4.5, 19.6, 9.0, 3.0),
    "cfs": (2.4, 10.2, 6.0, 2.0),
    "homepap": (3.4, 14.6, 8.0, 3.0),
}


def preset_config(name: str, **overrides) -> GeneratorConfig:
    rates = COHORT_PRESETS.get(name.lower())
    if rates is None:
        raise ValueError(f"unknown cohort preset {name!r}; choose from {sorted(COHORT_PRESETS)}")
    return GeneratorConfig(event_rate_per_h=rates, **overrides)


# -- internal event plans -------------------------------------------------------------


@dataclass(frozen=True)
class _RespPlan:
    onset_s: float
    duration_s: float
    label: EventLabel
    drop_frac: float

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s


@dataclass(frozen=True)
class _DesatPlan:
    onset_s: float  # annotated onset: crossing of the 3% rule threshold
    fall_s: float
    hold_s: float
    rise_s: float
    drop_pct: float

    @property
    def cross_frac(self) -> float:
        return 3.0 / self.drop_pct

    @property
    def fall_start_s(self) -> float:
        return self.onset_s - self.cross_frac * self.fall_s

    @property
    def end_s(self) -> float:
        # crossing back above (baseline - 3%) on the recovery ramp
        return self.fall_start_s + self.fall_s + self.hold_s + (1.0 - self.cross_frac) * self.rise_s

    @property
    def episode_span(self) -> tuple[float, float]:
        start = self.fall_start_s
        return (start, start + self.fall_s + self.hold_s + self.rise_s)

    def interval(self) -> EventInterval:
        return EventInterval.from_onset(self.onset_s, self.end_s - self.onset_s, EventLabel.DESATURATION)


@dataclass(frozen=True)
class _ArousalPlan:
    onset_s: float
    duration_s: float
    burst_hz: float

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s

    def interval(self) -> EventInterval:
        return EventInterval.from_onset(self.onset_s, self.duration_s, EventLabel.AROUSAL)


def _fits(onset: float, end: float, spans: Sequence[tuple[float, float]], gap: float) -> bool:
    return all(end + gap <= s or e + gap <= onset for s, e in spans)


def _place_events(
    rng: np.random.Generator,
    count: int,
    durations: np.ndarray,
    lo: float,
    hi: float,
    occupied: list[tuple[float, float]],
    gap: float,
    tries: int = 400,
) -> list[tuple[float, float]]:
    """Sequential rejection placement; events that cannot fit are dropped."""
    placed: list[tuple[float, float]] = []
    for i in range(count):
        dur = float(durations[i])
        if hi - dur <= lo:
            continue
        for _ in range(tries):
            onset = float(rng.uniform(lo, hi - dur))
            if _fits(onset, onset + dur, occupied, gap) and _fits(onset, onset + dur, placed, gap):
                placed.append((onset, onset + dur))
                break
    return placed


@dataclass(frozen=True)
class _Plan:
    resp: tuple[_RespPlan, ...]
    desats: tuple[_DesatPlan, ...]
    arousals: tuple[_ArousalPlan, ...]


def _schedule(cfg: GeneratorConfig, rng: np.random.Generator) -> _Plan:
    dur_s = cfg.duration_min * 60.0
    hours = cfg.duration_min / 60.0
    lo, hi = _LEAD_IN_S, dur_s - _TAIL_S

    def resp_drop(label: EventLabel) -> float:
        if label is EventLabel.APNEA:
            return float(np.clip(cfg.apnea_drop_frac + rng.uniform(0.0, 0.04), 0.9, 0.99))
        return float(np.clip(cfg.hypopnea_drop_frac + rng.uniform(-0.05, 0.05), 0.31, 0.89))

    # respiratory events first: jointly non-overlapping with generous gaps so
    # the trailing 60 s baseline always sees mostly-normal breathing
    n_ap = int(rng.poisson(cfg.rate(EventLabel.APNEA) * hours))
    n_hy = int(rng.poisson(cfg.rate(EventLabel.HYPOPNEA) * hours))
    labels = [EventLabel.APNEA] * n_ap + [EventLabel.HYPOPNEA] * n_hy
    rng.shuffle(labels)
    durs = rng.uniform(12.0, 28.0, size=len(labels))
    spans = _place_events(rng, len(labels), durs, lo, hi, [], gap=45.0)
    resp = [
        _RespPlan(onset, end - onset, label, resp_drop(label))
        for (onset, end), label in zip(spans, labels[: len(spans)])
    ]
    resp.sort(key=lambda r: r.onset_s)

    desats: list[_DesatPlan] = []
    arousals: list[_ArousalPlan] = []

    def new_desat(onset: float) -> _DesatPlan:
        return _DesatPlan(
            onset_s=onset,
            fall_s=float(rng.uniform(6.0, 10.0)),
            hold_s=float(rng.uniform(6.0, 12.0)),
            rise_s=float(rng.uniform(8.0, 14.0)),
            drop_pct=float(cfg.desat_drop_pct + rng.uniform(0.5, 2.0)),
        )

    def new_arousal(onset: float) -> _ArousalPlan:
        return _ArousalPlan(
            onset_s=onset,
            duration_s=float(rng.uniform(cfg.arousal_min_s, cfg.arousal_min_s + 7.0)),
            burst_hz=float(rng.uniform(18.0, 30.0)),
        )

    # physiologic consequences attached after each respiratory event
    for r in resp:
        attach_desat = attach_arousal = False
        if r.label is EventLabel.APNEA:
            attach_desat = rng.random() < cfg.apnea_desat_prob
            attach_arousal = rng.random() < cfg.apnea_arousal_prob
        else:
            if rng.random() < cfg.hypopnea_assoc_prob:
                attach_desat = rng.random() < 0.75
                attach_arousal = rng.random() < 0.55
                if not (attach_desat or attach_arousal):
                    attach_desat = True
        if attach_desat and r.end_s + 30.0 < dur_s - 10.0:
            delay = float(np.clip(cfg.desat_delay_s * rng.uniform(0.6, 1.4), 4.0, 18.0))
            desats.append(new_desat(r.end_s + delay))
        if attach_arousal and r.end_s + 25.0 < dur_s - 10.0:
            arousals.append(new_arousal(r.end_s + float(rng.uniform(1.0, 12.0))))

    # standalone events clear of every respiratory neighbourhood
    resp_clear_ar = [(r.onset_s - _RESP_CLEAR_BEFORE_S, r.end_s + _AROUSAL_CLEAR_AFTER_S) for r in resp]
    resp_clear_de = [(r.onset_s - _RESP_CLEAR_BEFORE_S, r.end_s + _DESAT_CLEAR_AFTER_S) for r in resp]

    n_std_ar = int(rng.poisson(cfg.rate(EventLabel.AROUSAL) * hours))
    ar_durs = rng.uniform(cfg.arousal_min_s, cfg.arousal_min_s + 7.0, size=n_std_ar)
    occupied_ar = resp_clear_ar + [(a.onset_s, a.end_s) for a in arousals]
    for onset, end in _place_events(rng, n_std_ar, ar_durs, lo, hi, occupied_ar, gap=15.0):
        arousals.append(
            _ArousalPlan(onset_s=onset, duration_s=end - onset, burst_hz=float(rng.uniform(18.0, 30.0)))
        )

    n_std_de = int(rng.poisson(cfg.rate(EventLabel.DESATURATION) * hours))
    de_durs = np.full(n_std_de, 40.0)  # placement footprint for a full episode
    occupied_de = resp_clear_de + [d.episode_span for d in desats]
    for onset, _end in _place_events(rng, n_std_de, de_durs, lo, hi, occupied_de, gap=10.0):
        desats.append(new_desat(onset + 10.0))

    desats.sort(key=lambda d: d.onset_s)
    arousals.sort(key=lambda a: a.onset_s)
    return _Plan(tuple(resp), tuple(desats), tuple(arousals))


# -- signal synthesis ------------------------------------------------------------------


def _window(n: int, lo_s: float, hi_s: float) -> slice:
    return slice(max(0, int(lo_s * FS_HZ)), min(n, int(math.ceil(hi_s * FS_HZ)) + 1))


def _edge_ramp(t: np.ndarray, onset: float, end: float, edge_s: float = 0.6) -> np.ndarray:
    """1 inside [onset, end], 0 outside, linear ramps of edge_s at each edge."""
    up = np.clip((t - onset) / edge_s + 1.0, 0.0, 1.0)
    down = np.clip((end - t) / edge_s + 1.0, 0.0, 1.0)
    return np.minimum(up, down)


def _synth_airflow(t: np.ndarray, plan: _Plan, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    n = t.size
    amp = 1.0 + 0.05 * np.sin(2 * math.pi * 0.007 * t + rng.uniform(0, 2 * math.pi))
    freq = cfg.resp_rate_hz * (1.0 + 0.03 * np.sin(2 * math.pi * 0.011 * t + rng.uniform(0, 2 * math.pi)))
    phase = 2 * math.pi * np.cumsum(freq) / FS_HZ
    flow = amp * np.sin(phase + rng.uniform(0, 2 * math.pi))
    for r in plan.resp:
        sl = _window(n, r.onset_s - 1.0, r.end_s + 1.0)
        flow[sl] *= 1.0 - r.drop_frac * _edge_ramp(t[sl], r.onset_s, r.end_s)
    return flow + cfg.noise_std * rng.standard_normal(n)


def _synth_spo2(t: np.ndarray, plan: _Plan, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    spo2 = np.full(t.size, cfg.baseline_spo2_pct)
    for d in plan.desats:
        fs_, hs, rs = d.fall_s, d.hold_s, d.rise_s
        start = d.fall_start_s
        sl = _window(t.size, start, start + fs_ + hs + rs)
        rel = t[sl] - start
        depth = np.clip(rel / fs_, 0.0, 1.0) - np.clip((rel - fs_ - hs) / rs, 0.0, 1.0)
        spo2[sl] -= d.drop_pct * depth
    return spo2 + cfg.noise_std * rng.standard_normal(t.size)


def _one_over_f_noise(n: int, rng: np.random.Generator, alpha: float = 1.6) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / FS_HZ)
    f[0] = f[1]
    spec *= f ** (-alpha / 2.0)
    x = np.fft.irfft(spec, n)
    return x / x.std()


def _synth_eeg(t: np.ndarray, plan: _Plan, cfg: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    n = t.size
    eeg = _one_over_f_noise(n, rng)
    # sprinkle alpha (10 Hz) bursts; they sit below the fast band and leave
    # the arousal detector's fast-power statistic untouched
    n_alpha = int(len(t) / FS_HZ / 30.0)
    for _ in range(n_alpha):
        c = rng.uniform(0, t[-1])
        width = rng.uniform(1.0, 3.0)
        ph = rng.uniform(0, 2 * math.pi)
        sl = _window(n, c - 4 * width, c + 4 * width)
        envelope = np.exp(-0.5 * ((t[sl] - c) / width) ** 2)
        eeg[sl] += 0.8 * envelope * np.sin(2 * math.pi * 10.0 * t[sl] + ph)
    for a in plan.arousals:
        ph = rng.uniform(0, 2 * math.pi)
        sl = _window(n, a.onset_s - 1.0, a.end_s + 1.0)
        envelope = _edge_ramp(t[sl], a.onset_s, a.end_s, edge_s=0.3)
        eeg[sl] += 2.0 * envelope * np.sin(2 * math.pi * a.burst_hz * t[sl] + ph)
    return eeg


def generate(cfg: GeneratorConfig) -> Recording:
    """Deterministically synthesize one annotated recording (same seed, same
    bits). Raises for durations under 10 minutes."""
    if cfg.duration_min < 10.0:
        raise ValueError(f"duration_min must be at least 10 (got {cfg.duration_min})")
    rng = np.random.default_rng(cfg.seed)
    n = int(round(cfg.duration_min * 60.0 * FS_HZ))
    t = np.arange(n) / FS_HZ
    plan = _schedule(cfg, rng)

    airflow = _synth_airflow(t, plan, cfg, rng)
    spo2 = _synth_spo2(t, plan, cfg, rng)
    eeg = _synth_eeg(t, plan, cfg, rng)

    annotations = [EventInterval.from_onset(r.onset_s, r.duration_s, r.label) for r in plan.resp]
    annotations += [d.interval() for d in plan.desats]
    annotations += [a.interval() for a in plan.arousals]
    annotations.sort(key=lambda e: (e.onset_s, int(e.label)))

    return Recording(
        id=f"synth-{cfg.seed}",
        channels=(
            SampleSeries(ChannelKind.EEG, FS_HZ, eeg),
            SampleSeries(ChannelKind.AIRFLOW, FS_HZ, airflow),
            SampleSeries(ChannelKind.SPO2, FS_HZ, spo2),
        ),
        total_sleep_time_min=cfg.duration_min,
        annotations=tuple(annotations),
    )


# -- oracle scorer ---------------------------------------------------------------------


@dataclass(frozen=True)
class OracleConfig:
    """Scoring thresholds. The defaults are the standard rule values; the
    association window and baseline length are scorer practice (the rules
    only say "pre-event baseline")."""

    apnea_residual: float = 0.10  # >= 90% drop
    hypopnea_residual: float = 0.70  # >= 30% drop
    resp_min_s: float = 10.0
    desat_drop_pct: float = 3.0
    desat_min_s: float = 3.0
    arousal_ratio_mult: float = 3.0
    arousal_min_s: float = 3.0
    arousal_stability_s: float = 10.0
    baseline_window_s: float = 60.0
    assoc_window_s: float = 30.0
    grid_hz: float = 10.0


@dataclass(frozen=True)
class OracleReport:
    events: tuple[EventInterval, ...]
    skipped_rules: tuple[str, ...] = ()


def _trailing_quantile(x: np.ndarray, window: int, q: float) -> np.ndarray:
    """out[i] = quantile(x[max(0, i-window):i], q), vectorized via window views.

    Baselines use an upper quantile for signals whose events depress them
    (airflow envelope, SpO2): the resting level survives even when events
    occupy most of the trailing window. The arousal baseline uses the median
    (q=0.5), since fast-power bursts corrupt upward and stay sparse.
    """
    n = x.size
    out = np.empty(n)
    head = min(window, n)
    out[:head] = np.quantile(x[:head], q)
    if n > window:
        views = sliding_window_view(x, window)
        out[window:] = np.quantile(views, q, axis=1)[: n - window]
    return out


def _trailing_median(x: np.ndarray, window: int) -> np.ndarray:
    return _trailing_quantile(x, window, 0.5)


def _runs_below(tg: np.ndarray, values: np.ndarray, thr: np.ndarray, merge_gap_s: float = 1.0):
    """Contiguous regions where values <= thr, with sub-grid edge refinement
    by linear interpolation of the crossing."""
    below = values <= thr
    if not below.any():
        return []
    d = np.diff(below.astype(np.int8))
    starts = list(np.where(d == 1)[0] + 1)
    ends = list(np.where(d == -1)[0] + 1)
    if below[0]:
        starts.insert(0, 0)
    if below[-1]:
        ends.append(len(below))
    runs = []
    dt = tg[1] - tg[0]
    for s, e in zip(starts, ends):
        if s > 0:
            gap = values[s - 1] - values[s]
            frac = (values[s - 1] - thr[s - 1]) / gap if gap > 0 else 0.0
            t_on = tg[s - 1] + float(np.clip(frac, 0.0, 1.0)) * dt
        else:
            t_on = tg[0]
        if e < len(values):
            gap = values[e] - values[e - 1]
            frac = (thr[e - 1] - values[e - 1]) / gap if gap > 0 else 1.0
            t_off = tg[e - 1] + float(np.clip(frac, 0.0, 1.0)) * dt
        else:
            t_off = tg[-1]
        runs.append([t_on, t_off])
    merged = [runs[0]]
    for on, off in runs[1:]:
        if on - merged[-1][1] < merge_gap_s:
            merged[-1][1] = off
        else:
            merged.append([on, off])
    return [(on, off) for on, off in merged]


def _airflow_envelope(series: SampleSeries, grid_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """Peak-amplitude envelope on a coarse grid: denoise, take |peaks| of the
    breath waveform, interpolate between them."""
    fs = series.rate_hz
    sos = sps.butter(4, 2.0, btype="lowpass", fs=fs, output="sos")
    smooth = sps.sosfiltfilt(sos, series.samples)
    ax = np.abs(smooth)
    peaks, _ = sps.find_peaks(ax, distance=max(1, int(fs * 1.0)))
    tg = np.arange(0.0, series.duration_s, 1.0 / grid_hz)
    if peaks.size < 2:
        return tg, np.full(tg.size, ax.max())
    env = np.interp(tg, peaks / fs, ax[peaks])
    return tg, env


def _score_respiratory(series: SampleSeries, cfg: OracleConfig):
    """Candidate respiratory events: (onset, end, is_apnea)."""
    tg, env = _airflow_envelope(series, cfg.grid_hz)
    window = int(cfg.baseline_window_s * cfg.grid_hz)
    baseline = np.maximum(_trailing_quantile(env, window, 0.75), 1e-9)
    ratio = env / baseline
    out = []
    thr = np.full(ratio.size, cfg.hypopnea_residual)
    for on, off in _runs_below(tg, ratio, thr):
        if off - on < cfg.resp_min_s:
            continue
        lo = np.searchsorted(tg, on)
        hi = max(lo + 1, np.searchsorted(tg, off))
        is_apnea = bool(ratio[lo:hi].min() <= cfg.apnea_residual)
        out.append((on, off, is_apnea))
    return out


def _score_desaturations(series: SampleSeries, cfg: OracleConfig) -> list[tuple[float, float]]:
    fs = series.rate_hz
    sos = sps.butter(2, 0.5, btype="lowpass", fs=fs, output="sos")
    smooth = sps.sosfiltfilt(sos, series.samples)
    tg = np.arange(0.0, series.duration_s, 1.0 / cfg.grid_hz)
    vals = np.interp(tg, np.arange(series.samples.size) / fs, smooth)
    window = int(cfg.baseline_window_s * cfg.grid_hz)
    baseline = _trailing_quantile(vals, window, 0.8)
    thr = baseline - cfg.desat_drop_pct
    return [(on, off) for on, off in _runs_below(tg, vals, thr) if off - on >= cfg.desat_min_s]


def _score_arousals(series: SampleSeries, cfg: OracleConfig) -> list[tuple[float, float]]:
    """Fast-band (16-45 Hz) power bursts against a trailing median baseline.

    Fast-band power is used directly rather than its ratio to total power:
    on 1/f-dominated EEG the short-window total fluctuates over an order of
    magnitude (lulls in slow activity crater the denominator), so a median-
    relative ratio threshold false-alarms constantly, while absolute
    fast-band power is insensitive to slow activity.
    """
    fs = series.rate_hz
    x = series.samples
    sos = sps.butter(4, [16.0, 45.0], btype="bandpass", fs=fs, output="sos")
    fast = sps.sosfiltfilt(sos, x)
    win = max(1, int(fs * 1.0))
    kernel = np.ones(win) / win
    fast_pow = np.convolve(fast * fast, kernel, mode="same")
    tg = np.arange(0.0, series.duration_s, 1.0 / cfg.grid_hz)
    vals = np.interp(tg, np.arange(x.size) / fs, fast_pow)
    window = int(cfg.baseline_window_s * cfg.grid_hz)
    baseline = np.maximum(_trailing_median(vals, window), 1e-9)
    thr = cfg.arousal_ratio_mult * baseline
    # reuse the run finder by negating: vals > thr  <=>  -vals <= -thr
    runs = _runs_below(tg, -vals, -thr)
    out: list[tuple[float, float]] = []
    prev_end = -math.inf
    for on, off in runs:
        # any threshold exceedance counts as instability, so a shift only
        # scores when the preceding stretch was genuinely quiet
        if off - on >= cfg.arousal_min_s and on - prev_end >= cfg.arousal_stability_s:
            out.append((on, off))
        prev_end = off
    return out


def _associated(hyp_end: float, onsets: Sequence[float], window_s: float) -> bool:
    return any(0.0 <= onset - hyp_end <= window_s for onset in onsets)


def score_recording(rec: Recording, cfg: OracleConfig = OracleConfig()) -> OracleReport:
    """Apply all four scoring rules to raw (pre-normalization) channels.

    Rules whose channel is missing are skipped and reported rather than
    raising: a partial recording still yields whatever can be scored.
    """
    skipped: list[str] = []
    events: list[EventInterval] = []

    airflow = rec.channel(ChannelKind.AIRFLOW)
    spo2 = rec.channel(ChannelKind.SPO2)
    eeg = rec.channel(ChannelKind.EEG)

    desats = _score_desaturations(spo2, cfg) if spo2 is not None else []
    if spo2 is None:
        skipped.append("desaturation: missing spo2 channel")
    arousals = _score_arousals(eeg, cfg) if eeg is not None else []
    if eeg is None:
        skipped.append("arousal: missing eeg channel")

    if airflow is None:
        skipped.append("apnea: missing airflow channel")
        skipped.append("hypopnea: missing airflow channel")
    else:
        resp = _score_respiratory(airflow, cfg)
        assoc_onsets = [on for on, _ in desats] + [on for on, _ in arousals]
        can_qualify = spo2 is not None or eeg is not None
        if not can_qualify:
            skipped.append("hypopnea: no spo2 or eeg channel to qualify candidates")
        for on, off, is_apnea in resp:
            if is_apnea:
                events.append(EventInterval.from_onset(on, off - on, EventLabel.APNEA))
            elif can_qualify and _associated(off, assoc_onsets, cfg.assoc_window_s):
                events.append(EventInterval.from_onset(on, off - on, EventLabel.HYPOPNEA))

    events += [EventInterval.from_onset(on, off - on, EventLabel.DESATURATION) for on, off in desats]
    events += [EventInterval.from_onset(on, off - on, EventLabel.AROUSAL) for on, off in arousals]

    for ev in events:
        if ev.label in (EventLabel.APNEA, EventLabel.HYPOPNEA):
            assert ev.duration_s >= cfg.resp_min_s
        elif ev.label is EventLabel.AROUSAL:
            assert ev.duration_s >= cfg.arousal_min_s

    events.sort(key=lambda e: (e.onset_s, int(e.label)))
    return OracleReport(tuple(events), tuple(skipped))


def oracle_score(rec: Recording, cfg: OracleConfig = OracleConfig()) -> list[EventInterval]:
    return list(score_recording(rec, cfg).events)


def estimated_ahi_events(events: Sequence[EventInterval], assoc_window_s: float = 30.0) -> list[EventInterval]:
    """Respiratory events that count toward an estimated AHI: every apnea,
    plus each hypopnea with an arousal or desaturation onset inside the
    window after the hypopnea ends."""
    onsets = [e.onset_s for e in events if e.label in (EventLabel.AROUSAL, EventLabel.DESATURATION)]
    kept = []
    for e in events:
        if e.label is EventLabel.APNEA:
            kept.append(e)
        elif e.label is EventLabel.HYPOPNEA and _associated(e.end_s, onsets, assoc_window_s):
            kept.append(e)
    return kept
