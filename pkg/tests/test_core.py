"""Domain-type tests: interval algebra, masks, and validation."""

import numpy as np
import pytest

from osadet.core import (
    ChannelKind,
    EventInterval,
    EventLabel,
    ModalityMask,
    Recording,
    SampleSeries,
    channel_from_name,
    event_label_from_name,
    interval_iou,
    onset_end,
)


def iv(onset, end, label=EventLabel.APNEA, score=1.0):
    return EventInterval.from_onset(onset, end - onset, label, score)


# -- interval_iou -------------------------------------------------------------------


def test_iou_partial_overlap():
    assert interval_iou(iv(0, 10), iv(5, 15)) == pytest.approx(5 / 15)


def test_iou_identical():
    assert interval_iou(iv(3, 13), iv(3, 13)) == 1.0


def test_iou_disjoint():
    assert interval_iou(iv(0, 10), iv(20, 30)) == 0.0


def test_iou_ignores_labels():
    assert interval_iou(iv(0, 10, EventLabel.APNEA), iv(0, 10, EventLabel.AROUSAL)) == 1.0


def test_iou_properties_randomized():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a = iv(rng.uniform(0, 100), rng.uniform(100, 200))
        b = iv(rng.uniform(0, 100), rng.uniform(100, 200))
        x = interval_iou(a, b)
        assert 0.0 <= x <= 1.0
        assert x == interval_iou(b, a)  # symmetric
        shift = rng.uniform(0, 50)
        assert interval_iou(a.shifted(shift), b.shifted(shift)) == pytest.approx(x, abs=1e-12)
        # equals 1 iff identical
        if x == 1.0:
            assert a.onset_s == b.onset_s and a.end_s == b.end_s


# -- onset/end ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "center,dur,expected",
    [(15.0, 10.0, (10.0, 20.0)), (5.0, 10.0, (0.0, 10.0)), (100.0, 3.0, (98.5, 101.5))],
)
def test_onset_end(center, dur, expected):
    e = EventInterval(center, dur, EventLabel.HYPOPNEA)
    assert onset_end(e) == pytest.approx(expected)


def test_onset_end_roundtrip():
    rng = np.random.default_rng(1)
    for _ in range(100):
        onset = rng.uniform(0, 1000)
        dur = rng.uniform(0.1, 100)
        e = EventInterval.from_onset(onset, dur, EventLabel.DESATURATION)
        o, en = onset_end(e)
        assert o == pytest.approx(onset, abs=1e-9)
        assert en == pytest.approx(onset + dur, abs=1e-9)


# -- EventInterval validation ----------------------------------------------------------


def test_event_rejects_nonpositive_duration():
    with pytest.raises(ValueError):
        EventInterval(10.0, 0.0, EventLabel.APNEA)


def test_event_rejects_negative_onset():
    with pytest.raises(ValueError):
        EventInterval(1.0, 10.0, EventLabel.APNEA)  # onset would be -4


def test_event_rejects_bad_score():
    with pytest.raises(ValueError):
        EventInterval(10.0, 5.0, EventLabel.APNEA, score=1.5)


def test_event_clipped():
    e = iv(10, 30)
    c = e.clipped(20, 100)
    assert (c.onset_s, c.end_s) == (20.0, 30.0)
    assert e.clipped(40, 50) is None


# -- ModalityMask -----------------------------------------------------------------------


def test_mask_from_spec():
    assert ModalityMask.from_spec("all") == ModalityMask((True, True, True))
    assert ModalityMask.from_spec("eeg") == ModalityMask((True, False, False))
    assert ModalityMask.from_spec("airflow+spo2") == ModalityMask((False, True, True))


def test_mask_spec_roundtrip():
    for spec in ("all", "eeg", "airflow+spo2", "eeg+spo2"):
        assert ModalityMask.from_spec(spec).spec() == spec


def test_mask_rejects_garbage():
    with pytest.raises(ValueError):
        ModalityMask.from_spec("ecg")


def test_mask_indexing():
    m = ModalityMask.from_spec("eeg")
    assert m[ChannelKind.EEG] and not m[ChannelKind.AIRFLOW]
    assert m.active() == (ChannelKind.EEG,)


# -- enums / names ---------------------------------------------------------------------


def test_channel_ordering_fixed():
    assert [int(k) for k in ChannelKind] == [0, 1, 2]
    assert ChannelKind.EEG < ChannelKind.AIRFLOW < ChannelKind.SPO2


def test_event_label_ordering_fixed():
    assert [int(l) for l in EventLabel] == [0, 1, 2, 3]
    assert event_label_from_name("Apnea") is EventLabel.APNEA
    assert channel_from_name("SPO2") is ChannelKind.SPO2


# -- Recording --------------------------------------------------------------------------


def test_recording_rejects_duplicate_kind():
    s = SampleSeries(ChannelKind.EEG, 10.0, np.zeros(10) + 1.0)
    with pytest.raises(ValueError, match="duplicate"):
        Recording("x", (s, s))


def test_recording_rejects_tst_exceeding_duration():
    s = SampleSeries(ChannelKind.EEG, 1.0, np.ones(60))  # 1 minute
    with pytest.raises(ValueError, match="exceeds"):
        Recording("x", (s,), total_sleep_time_min=5.0)


def test_recording_channel_lookup():
    s = SampleSeries(ChannelKind.AIRFLOW, 10.0, np.ones(100))
    rec = Recording("x", (s,), total_sleep_time_min=0.1)
    assert rec.channel(ChannelKind.AIRFLOW) is s
    assert rec.channel(ChannelKind.EEG) is None


def test_sample_series_validation():
    with pytest.raises(ValueError):
        SampleSeries(ChannelKind.EEG, 0.0, np.ones(5))
    with pytest.raises(ValueError):
        SampleSeries(ChannelKind.EEG, 10.0, np.empty(0))


def test_sample_series_immutable():
    s = SampleSeries(ChannelKind.EEG, 10.0, np.ones(5))
    with pytest.raises(ValueError):
        s.samples[0] = 2.0
