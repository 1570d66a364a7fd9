from dataclasses import replace

import numpy as np
import pytest

from cifbeat.errors import BadConfig
from cifbeat.synth import ChannelSpec, SynthConfig, beat_samples, corpus_configs, generate, write_corpus
from cifbeat.record_io import load_annotations, load_record


def test_generate_shapes_and_beats():
    cfg = SynthConfig(duration_s=60, fs=360, seed=1)
    rec, ann = generate(cfg)
    assert rec.signals.shape == (2, 21600)
    assert rec.channel_names == ["ECG", "BP"]
    rr = np.diff(ann.beat_samples) / 360 * 1000
    assert rr.min() >= 800 - 3 * 40 - 3 and rr.max() <= 800 + 3 * 40 + 3
    assert ann.count == pytest.approx(60 / 0.8, abs=3)


def test_generate_is_deterministic():
    a = generate(SynthConfig(duration_s=30, seed=5))
    b = generate(SynthConfig(duration_s=30, seed=5))
    assert a[0] == b[0] and a[1] == b[1]
    assert not generate(SynthConfig(duration_s=30, seed=6))[0] == a[0]


def test_spike_peaks_at_beat():
    cfg = SynthConfig(duration_s=30, channels=(ChannelSpec("ECG", "qrs_spike"),), drift_amplitude=0.0,
                      t_wave_amplitude=0.0)
    rec, ann = generate(cfg)
    for b in ann.beat_samples[1:-1]:
        seg = rec.signals[0, b - 20:b + 21]
        assert np.argmax(seg) == 20


def test_bp_pulse_is_delayed():
    cfg = SynthConfig(duration_s=30, channels=(ChannelSpec("BP", "bp_pulse"),), bp_lag_ms=200)
    rec, ann = generate(cfg)
    b = ann.beat_samples[3]
    assert np.argmax(rec.signals[0, b:b + 100]) == 50


def test_dropout_zeroes_channel():
    cfg = SynthConfig(duration_s=30, dropout=((0, 30, "BP"),))
    rec, _ = generate(cfg)
    assert not rec.signals[1].any()
    assert rec.signals[0].any()


@pytest.mark.parametrize("kw", [dict(rr_mean_ms=250), dict(rr_jitter_ms=300), dict(duration_s=5),
                                dict(dropout=((5, 1, 0),)), dict(dropout=((0, 1, "PPG"),)),
                                dict(channels=())])
def test_invalid_configs(kw):
    with pytest.raises(BadConfig):
        replace(SynthConfig(), **kw).validate()


def test_beats_without_jitter_are_periodic():
    beats = beat_samples(SynthConfig(rr_jitter_ms=0, duration_s=20), np.random.default_rng(0))
    assert set(np.diff(beats).tolist()) == {200}


def test_corpus_round_trip(tmp_path):
    configs = corpus_configs(2, SynthConfig(duration_s=20, fs=360), seed=3)
    assert [c.record_id for c in configs] == ["syn000", "syn001"]
    headers = write_corpus(configs, tmp_path)
    rec = load_record(headers[0])
    orig, ann = generate(configs[0])
    # i16le quantises ECG at gain 1000 and BP at gain 100
    assert np.max(np.abs(rec.signals[0] - orig.signals[0])) <= 0.5 / 1000 + 1e-12
    assert np.max(np.abs(rec.signals[1] - orig.signals[1])) <= 0.5 / 100 + 1e-12
    assert load_annotations(tmp_path / "syn000.ann", 360) == ann
