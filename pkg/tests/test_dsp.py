"""Preprocessing tests: resampling fidelity, normalization, filter response,
quality gating, and segmentation arithmetic."""

import numpy as np
import pytest

from osadet.core import ChannelKind, EventInterval, EventLabel, ModalityMask, Recording, SampleSeries
from osadet.dsp import (
    DegenerateSignalError,
    EpochBatch,
    PreprocessConfig,
    TooShortError,
    bandpass_eeg,
    preprocess_recording,
    quality_check,
    resample,
    segment,
    zscore,
)


def series(kind, rate, x):
    return SampleSeries(kind, rate, np.asarray(x, dtype=float))


def tone(freq, rate, dur_s, amp=1.0):
    t = np.arange(0, dur_s, 1.0 / rate)
    return amp * np.sin(2 * np.pi * freq * t)


# -- resample -----------------------------------------------------------------------


def test_resample_exact_decimation_length():
    s = series(ChannelKind.AIRFLOW, 200.0, np.random.default_rng(0).standard_normal(1000))
    out = resample(s, 100.0)
    assert len(out) == 500
    assert out.rate_hz == 100.0


def test_resample_identity():
    s = series(ChannelKind.AIRFLOW, 100.0, np.arange(100.0))
    out = resample(s, 100.0)
    np.testing.assert_array_equal(out.samples, s.samples)


def test_resample_preserves_tone():
    # independent oracle: the analytically sampled sine at the output rate
    s = series(ChannelKind.AIRFLOW, 25.0, tone(1.0, 25.0, 20.0))
    out = resample(s, 100.0)
    t = np.arange(len(out)) / 100.0
    ref = np.sin(2 * np.pi * 1.0 * t)
    mid = slice(100, len(out) - 100)  # skip filter edge transients
    amp = np.abs(out.samples[mid]).max()
    assert abs(amp - 1.0) < 0.01
    assert np.abs(out.samples[mid] - ref[mid]).max() < 0.01


def test_resample_duration_within_one_sample():
    s = series(ChannelKind.SPO2, 7.0, np.random.default_rng(1).standard_normal(700))
    out = resample(s, 100.0)
    assert abs(out.duration_s - s.duration_s) <= 1.0 / 100.0


def test_resample_rejects_bad_rate():
    s = series(ChannelKind.EEG, 100.0, np.zeros(10) + 1.0)
    with pytest.raises(ValueError):
        resample(s, 0.0)
    with pytest.raises(ValueError):
        resample(s, -5.0)


# -- zscore -------------------------------------------------------------------------


def test_zscore_small_example():
    out = zscore(series(ChannelKind.EEG, 10.0, [1.0, 2.0, 3.0]))
    np.testing.assert_allclose(out.samples, [-1.2247448, 0.0, 1.2247448], atol=1e-6)


def test_zscore_constant_raises():
    with pytest.raises(DegenerateSignalError):
        zscore(series(ChannelKind.SPO2, 1.0, np.full(50, 97.0)))


def test_zscore_postcondition():
    rng = np.random.default_rng(2)
    out = zscore(series(ChannelKind.EEG, 100.0, rng.standard_normal(1000) * 7 + 3))
    assert abs(out.samples.mean()) < 1e-6
    assert abs(out.samples.std() - 1.0) < 1e-6


# -- bandpass -----------------------------------------------------------------------


def test_bandpass_passband_10hz():
    s = series(ChannelKind.EEG, 100.0, tone(10.0, 100.0, 60.0))
    out = bandpass_eeg(s).samples
    mid = slice(1500, 4500)
    assert np.abs(out[mid]).max() >= 0.89


@pytest.mark.parametrize("freq,limit", [(0.05, 0.1), (49.0, 0.1)])
def test_bandpass_stopband(freq, limit):
    s = series(ChannelKind.EEG, 100.0, tone(freq, 100.0, 120.0))
    out = bandpass_eeg(s).samples
    mid = slice(3000, 9000)
    assert np.abs(out[mid]).max() <= limit


def test_bandpass_zero_signal():
    s = series(ChannelKind.EEG, 100.0, np.zeros(1000))
    np.testing.assert_allclose(bandpass_eeg(s).samples, 0.0)


def test_bandpass_zero_phase():
    # a pulse's center of mass must not shift
    x = np.zeros(2000)
    x[1000] = 1.0
    out = bandpass_eeg(series(ChannelKind.EEG, 100.0, x)).samples
    power = out**2
    centroid = (np.arange(len(out)) * power).sum() / power.sum()
    assert abs(centroid - 1000) < 1.0


def test_bandpass_rejects_non_eeg():
    with pytest.raises(ValueError, match="EEG"):
        bandpass_eeg(series(ChannelKind.AIRFLOW, 100.0, np.ones(100)))


# -- quality check ------------------------------------------------------------------


def _recording(channels, tst=30.0, rid="r0"):
    return Recording(rid, tuple(channels), total_sleep_time_min=tst)


def _clean_channels(dur_s=2400.0, rate=100.0):
    rng = np.random.default_rng(3)
    n = int(dur_s * rate)
    return [
        series(ChannelKind.EEG, rate, rng.standard_normal(n)),
        series(ChannelKind.AIRFLOW, rate, tone(0.25, rate, dur_s) + 0.01 * rng.standard_normal(n)),
        series(ChannelKind.SPO2, rate, 97.0 + 0.1 * rng.standard_normal(n)),
    ]


def test_quality_check_missing_channel():
    chans = [c for c in _clean_channels() if c.kind != ChannelKind.AIRFLOW]
    res = quality_check(_recording(chans))
    assert not res
    assert "missing channel" in res.reason


def test_quality_check_missing_tst():
    res = quality_check(_recording(_clean_channels(), tst=None))
    assert not res
    assert "sleep time" in res.reason


def test_quality_check_accepts_clean():
    assert quality_check(_recording(_clean_channels()))


def test_quality_check_artifact_budget():
    chans = _clean_channels()
    eeg = np.array(chans[0].samples)
    n = len(eeg)
    eeg[: n // 5] = 10.0 * np.sign(eeg[: n // 5] + 0.5)  # 20% of samples at robust |z| ~ 10
    chans[0] = series(ChannelKind.EEG, 100.0, eeg)
    res = quality_check(_recording(chans), PreprocessConfig(z_limit=6.0, artifact_budget=0.05))
    assert not res
    assert "artifact budget" in res.reason


# -- segmentation -------------------------------------------------------------------


def _processed_recording(dur_s, annotations=()):
    rng = np.random.default_rng(4)
    n = int(dur_s * 100)
    chans = tuple(series(k, 100.0, rng.standard_normal(n)) for k in ChannelKind)
    return Recording("seg", chans, total_sleep_time_min=dur_s / 60.0, annotations=tuple(annotations))


def test_segment_counts_exact_tiling():
    epochs = segment(_processed_recording(1000.0), 250.0, 250.0)
    assert len(epochs) == 4
    assert all(e.valid_s == 250.0 for e in epochs)


def test_segment_final_epoch_padded():
    epochs = segment(_processed_recording(1100.0), 250.0, 250.0)
    assert len(epochs) == 5
    last = epochs[-1]
    assert last.valid_s == pytest.approx(100.0)
    assert not np.any(last.data[:, int(100.0 * 100) :])
    assert last.n_samples == 25000


def test_segment_clips_boundary_event():
    ev = EventInterval.from_onset(240.0, 20.0, EventLabel.APNEA)
    epochs = segment(_processed_recording(500.0, [ev]), 250.0, 250.0)
    first = [e for e in epochs[0].events if e.label == EventLabel.APNEA]
    second = [e for e in epochs[1].events if e.label == EventLabel.APNEA]
    assert len(first) == 1 and len(second) == 1
    assert first[0].onset_s == pytest.approx(240.0)
    assert first[0].duration_s + second[0].duration_s == pytest.approx(20.0)
    assert second[0].onset_s == pytest.approx(0.0)


def test_segment_reconstruction():
    rec = _processed_recording(1100.0)
    epochs = segment(rec, 250.0, 250.0)
    parts = [e.data[:, : int(e.valid_s * 100)] for e in epochs]
    rebuilt = np.concatenate(parts, axis=1)
    original = np.stack([rec.channel(k).samples for k in ChannelKind]).astype(np.float32)
    np.testing.assert_array_equal(rebuilt, original)


def test_segment_too_short():
    with pytest.raises(TooShortError):
        segment(_processed_recording(5.0))


def test_segment_absent_channel_masked():
    rng = np.random.default_rng(5)
    chans = (series(ChannelKind.EEG, 100.0, rng.standard_normal(30000)),)
    rec = Recording("m", chans, total_sleep_time_min=4.0)
    epochs = segment(rec, 250.0, 250.0)
    assert epochs[0].mask == ModalityMask((True, False, False))
    assert not np.any(epochs[0].data[1:])


def test_epoch_batch_rejects_nonzero_masked_channel():
    data = np.ones((3, 100), dtype=np.float32)
    with pytest.raises(ValueError, match="masked channel"):
        EpochBatch(data=data, mask=ModalityMask((True, True, False)), start_s=0.0, valid_s=1.0)


# -- pipeline order golden test ------------------------------------------------------


def test_pipeline_order_golden():
    """Permuting zscore and bandpass changes the output; this pins the
    canonical order (resample -> bandpass -> zscore) on a fixed input."""
    t = np.arange(0, 40.0, 1 / 50.0)
    x = np.sin(2 * np.pi * 9.0 * t) + 0.5 * np.sin(2 * np.pi * 0.05 * t) + 2.0
    rec = Recording("g", (series(ChannelKind.EEG, 50.0, x),), total_sleep_time_min=0.5)
    out = preprocess_recording(rec).channel(ChannelKind.EEG).samples
    golden = np.array([-0.00657645, 0.74652091, 1.26622782, 1.38782745, 1.07729099])
    np.testing.assert_allclose(out[1000:1005], golden, atol=1e-6)
    # the reversed order (zscore before bandpass) must NOT match: the DC
    # offset removed by the filter changes the normalization statistics
    zs = zscore(series(ChannelKind.EEG, 100.0, resample(rec.channels[0], 100.0).samples))
    swapped = bandpass_eeg(zs).samples
    assert np.abs(swapped[1000:1005] - golden).max() > 1e-3
