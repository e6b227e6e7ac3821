"""Generator and oracle-scorer tests, including the generator/oracle closed
loop that anchors the rest of the pipeline's ground truth."""

import math

import numpy as np
import pytest
from scipy import stats

from osadet.core import ChannelKind, EventInterval, EventLabel, Recording, SampleSeries
from osadet.evaluate import MatchResult, match_events
from osadet.synth import (
    FS_HZ,
    GeneratorConfig,
    OracleConfig,
    estimated_ahi_events,
    generate,
    oracle_score,
    preset_config,
    score_recording,
)


def quiet_recording(duration_s=300.0, airflow_mod=None, rid="hand"):
    """Recording with plain breathing, flat SpO2 and burst-free EEG;
    airflow_mod(t) multiplies the breathing waveform."""
    rng = np.random.default_rng(99)
    n = int(duration_s * FS_HZ)
    t = np.arange(n) / FS_HZ
    flow = np.sin(2 * math.pi * 0.25 * t)
    if airflow_mod is not None:
        flow = flow * airflow_mod(t)
    flow = flow + 0.01 * rng.standard_normal(n)
    spo2 = 97.0 + 0.02 * rng.standard_normal(n)
    from osadet.synth import _one_over_f_noise

    eeg = _one_over_f_noise(n, rng)
    return Recording(
        rid,
        (
            SampleSeries(ChannelKind.EEG, FS_HZ, eeg),
            SampleSeries(ChannelKind.AIRFLOW, FS_HZ, flow),
            SampleSeries(ChannelKind.SPO2, FS_HZ, spo2),
        ),
        total_sleep_time_min=duration_s / 60.0,
    )


def drop_mod(onset, end, frac, edge=0.6):
    def mod(t):
        up = np.clip((t - onset) / edge + 1.0, 0.0, 1.0)
        down = np.clip((end - t) / edge + 1.0, 0.0, 1.0)
        return 1.0 - frac * np.minimum(up, down)

    return mod


# -- generator contracts ---------------------------------------------------------------


def test_zero_rates_give_empty_annotations():
    cfg = GeneratorConfig(duration_min=12.0, seed=5, event_rate_per_h=(0.0, 0.0, 0.0, 0.0))
    rec = generate(cfg)
    assert rec.annotations == ()


def test_generate_deterministic():
    a = generate(GeneratorConfig(duration_min=12.0, seed=42))
    b = generate(GeneratorConfig(duration_min=12.0, seed=42))
    assert a.annotations == b.annotations
    for ka, kb in zip(a.channels, b.channels):
        assert ka.samples.tobytes() == kb.samples.tobytes()


def test_generate_rejects_short_duration():
    with pytest.raises(ValueError, match="duration_min"):
        GeneratorConfig(duration_min=5.0)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(apnea_drop_frac=0.8)
    with pytest.raises(ValueError):
        GeneratorConfig(hypopnea_drop_frac=0.95)
    with pytest.raises(ValueError):
        GeneratorConfig(desat_drop_pct=2.0)
    with pytest.raises(ValueError):
        GeneratorConfig(arousal_min_s=1.0)
    with pytest.raises(ValueError):
        GeneratorConfig(baseline_spo2_pct=75.0)


def test_generate_channels_and_tst():
    rec = generate(GeneratorConfig(duration_min=12.0, seed=1))
    assert [c.kind for c in rec.channels] == [ChannelKind.EEG, ChannelKind.AIRFLOW, ChannelKind.SPO2]
    assert all(c.rate_hz == FS_HZ for c in rec.channels)
    assert rec.total_sleep_time_min == 12.0


def test_apnea_counts_within_poisson_bounds():
    """Counts over 100 seeds stay inside the 99% Poisson band for the
    configured rate, and the mean lands near it."""
    rate, dur_min = 30.0, 60.0
    counts = []
    for seed in range(100):
        cfg = GeneratorConfig(duration_min=dur_min, seed=seed, event_rate_per_h=(rate, 0.0, 0.0, 0.0))
        rec = generate(cfg)
        counts.append(sum(1 for e in rec.annotations if e.label == EventLabel.APNEA))
    counts = np.asarray(counts)
    lo, hi = stats.poisson.ppf([0.005, 0.995], rate * dur_min / 60.0)
    inside = np.mean((counts >= lo) & (counts <= hi))
    assert inside >= 0.97
    assert abs(counts.mean() - rate) < 2.5


def test_rate_monotonicity():
    def mean_count(rate):
        total = 0
        for seed in range(12):
            cfg = GeneratorConfig(duration_min=20.0, seed=seed, event_rate_per_h=(rate, 0.0, 0.0, 0.0))
            total += len(generate(cfg).annotations)
        return total / 12

    assert mean_count(5.0) < mean_count(15.0) < mean_count(30.0)


def test_generated_events_scoreable_by_construction():
    for seed in range(5):
        rec = generate(GeneratorConfig(duration_min=15.0, seed=seed))
        for e in rec.annotations:
            if e.label in (EventLabel.APNEA, EventLabel.HYPOPNEA):
                assert e.duration_s >= 10.0
            elif e.label is EventLabel.AROUSAL:
                assert e.duration_s >= 3.0
            else:
                assert e.duration_s >= 3.0


# -- oracle rules on hand-built signals -------------------------------------------------


def test_oracle_ignores_short_drop():
    # 50% drop lasting 8 s: below the 10 s floor, no event
    rec = quiet_recording(airflow_mod=drop_mod(100.0, 108.0, 0.5))
    assert oracle_score(rec) == []


def test_oracle_unaccompanied_hypopnea_rejected():
    # 40% drop for 15 s with no desaturation and no arousal: not a hypopnea
    rec = quiet_recording(airflow_mod=drop_mod(100.0, 115.0, 0.4))
    events = oracle_score(rec)
    assert [e for e in events if e.label == EventLabel.HYPOPNEA] == []
    assert events == []


def test_oracle_detects_apnea_on_hand_signal():
    rec = quiet_recording(airflow_mod=drop_mod(100.0, 118.0, 0.95))
    events = oracle_score(rec)
    apneas = [e for e in events if e.label == EventLabel.APNEA]
    assert len(apneas) == 1
    assert apneas[0].onset_s == pytest.approx(100.0, abs=2.0)
    assert apneas[0].end_s == pytest.approx(118.0, abs=2.0)


def test_oracle_skips_rules_for_missing_channels():
    rec = generate(GeneratorConfig(duration_min=12.0, seed=3))
    partial = Recording(
        rec.id,
        tuple(c for c in rec.channels if c.kind != ChannelKind.EEG),
        rec.total_sleep_time_min,
        rec.annotations,
    )
    report = score_recording(partial)
    assert any("arousal" in s for s in report.skipped_rules)
    assert all(e.label != EventLabel.AROUSAL for e in report.events)


def test_oracle_airflow_missing_skips_respiratory():
    rec = generate(GeneratorConfig(duration_min=12.0, seed=3))
    partial = Recording(
        rec.id,
        tuple(c for c in rec.channels if c.kind == ChannelKind.EEG),
        rec.total_sleep_time_min,
    )
    report = score_recording(partial)
    assert any("apnea" in s for s in report.skipped_rules)
    assert any("desaturation" in s for s in report.skipped_rules)
    assert all(e.label == EventLabel.AROUSAL for e in report.events)


# -- closed loop -------------------------------------------------------------------------


def test_closed_loop_small():
    """Oracle reproduces the generator's annotations (subset of the full
    20-seed acceptance run)."""
    results = []
    for seed in range(5):
        rec = generate(GeneratorConfig(duration_min=20.0, seed=seed))
        pred = oracle_score(rec)
        results.append(match_events(pred, rec.annotations, 0.5))
        for e in pred:
            if e.label in (EventLabel.APNEA, EventLabel.HYPOPNEA):
                assert e.duration_s >= 10.0
            if e.label is EventLabel.AROUSAL:
                assert e.duration_s >= 3.0
    assert MatchResult.combine(results).pooled_f1() >= 0.99


# -- AHI-estimation event filter ---------------------------------------------------------


def _ev(onset, dur, label):
    return EventInterval.from_onset(onset, dur, label)


def test_estimated_ahi_keeps_windowed_hypopnea():
    events = [_ev(100.0, 15.0, EventLabel.HYPOPNEA), _ev(120.0, 10.0, EventLabel.DESATURATION)]
    kept = estimated_ahi_events(events, 30.0)
    assert [e.label for e in kept] == [EventLabel.HYPOPNEA]


def test_estimated_ahi_drops_distant_hypopnea():
    events = [_ev(100.0, 15.0, EventLabel.HYPOPNEA), _ev(200.0, 8.0, EventLabel.AROUSAL)]
    assert estimated_ahi_events(events, 30.0) == []


def test_estimated_ahi_empty():
    assert estimated_ahi_events([], 30.0) == []


def test_estimated_ahi_apnea_always_qualifies():
    events = [_ev(100.0, 15.0, EventLabel.APNEA)]
    assert len(estimated_ahi_events(events, 30.0)) == 1


def test_accompaniment_fraction_controls_estimate():
    for frac in (1.0, 0.5):
        ratios = []
        for seed in range(10):
            cfg = GeneratorConfig(
                duration_min=30.0, seed=seed, hypopnea_assoc_prob=frac, event_rate_per_h=(0.0, 15.0, 0.0, 0.0)
            )
            rec = generate(cfg)
            hyp = [e for e in rec.annotations if e.label == EventLabel.HYPOPNEA]
            kept = [e for e in estimated_ahi_events(rec.annotations, 30.0) if e.label == EventLabel.HYPOPNEA]
            if hyp:
                ratios.append(len(kept) / len(hyp))
        assert abs(np.mean(ratios) - frac) < 0.15


# -- presets -----------------------------------------------------------------------------


def test_preset_config():
    cfg = preset_config("mros", duration_min=15.0, seed=7)
    assert cfg.duration_min == 15.0
    assert cfg.event_rate_per_h == (7.8, 13.5, 10.0, 3.0)
    with pytest.raises(ValueError, match="preset"):
        preset_config("nope")
