import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cifbeat.errors import EmptySignal, ShiftTooLarge, TooShort
from cifbeat.preprocess import (
    CanonicalRecord, PreprocessConfig, compensate_lag, is_bp_like, is_ecg_like, median_filter,
    normalize_windows, preprocess_record, remove_baseline, resample,
)
from cifbeat.record_io import ChannelMeta, Record

from oracles import oracle_median_filter


def test_resample_doubling_example():
    np.testing.assert_allclose(resample([0.0, 1.0], 125, 250), [0.0, 0.5, 1.0, 1.0])


def test_resample_identity():
    x = np.random.default_rng(0).normal(size=100)
    np.testing.assert_array_equal(resample(x, 250, 250), x)


@pytest.mark.parametrize("n,fs,expected", [(360, 360, 250), (1000, 360, 694), (7, 360, 5), (3, 500, 2), (1, 500, 1)])
def test_resample_length_round_half_up(n, fs, expected):
    # 1000*250/360 = 694.4, 7*250/360 = 4.86, 3*250/500 = 1.5 -> 2
    assert len(resample(np.zeros(n), fs, 250)) == expected


def test_resample_linear_signal_stays_linear():
    # a line sampled at 360 Hz lands back on the same line at 250 Hz
    x = 0.3 * np.arange(3600) / 360
    y = resample(x, 360, 250)
    t = np.arange(len(y)) / 250
    np.testing.assert_allclose(y[:-2], 0.3 * t[:-2], atol=1e-12)


def test_resample_empty():
    with pytest.raises(EmptySignal):
        resample([], 360)


@pytest.mark.parametrize("width", [1, 2, 5, 50])
def test_median_filter_matches_oracle(width):
    x = np.random.default_rng(width).normal(size=137)
    np.testing.assert_allclose(median_filter(x, width), oracle_median_filter(list(x), width), atol=0)


def test_baseline_cascade_matches_oracle():
    x = np.random.default_rng(7).normal(size=400)
    b = oracle_median_filter(oracle_median_filter(list(x), 50), 150)
    np.testing.assert_allclose(remove_baseline(x), x - np.array(b), atol=1e-12)


def test_baseline_removes_constant():
    np.testing.assert_array_equal(remove_baseline(np.full(300, 3.7)), 0.0)


def test_baseline_ramp_residual_is_one_sample_of_slope():
    # each even-width median lags a ramp by half a sample, so the cascade lags
    # by exactly one sample away from the edges
    slope = 0.01
    x = slope * np.arange(1000)
    r = remove_baseline(x)
    np.testing.assert_allclose(r[100:-100], slope, atol=1e-12)


def test_baseline_too_short():
    with pytest.raises(TooShort):
        remove_baseline(np.zeros(149))


def test_normalize_example():
    x = np.concatenate([np.full(500, 2.0), np.full(500, -0.5), np.zeros(10)])
    y = normalize_windows(x)
    np.testing.assert_array_equal(y[:500], 1.0)
    np.testing.assert_array_equal(y[500:1000], -1.0)
    np.testing.assert_array_equal(y[1000:], 0.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 1600), elements=st.floats(-1e6, 1e6)))
def test_normalize_bounds_and_peaks(x):
    y = normalize_windows(x)
    assert np.all(np.abs(y) <= 1.0)
    for s in range(0, len(x), 500):
        if np.max(np.abs(x[s:s + 500])) >= 1e-8:
            assert np.max(np.abs(y[s:s + 500])) == pytest.approx(1.0)


def _canon(signals, names=("ECG", "BP")):
    return CanonicalRecord("r", tuple(ChannelMeta(n) for n in names), signals)


def test_lag_200ms_is_50_samples():
    x = np.vstack([np.arange(300.0), np.arange(300.0)])
    out = compensate_lag(_canon(x), {"BP": 200.0})
    np.testing.assert_array_equal(out.signals[0], x[0])
    np.testing.assert_array_equal(out.signals[1, :250], x[1, 50:])
    np.testing.assert_array_equal(out.signals[1, 250:], 0.0)
    assert out.lag_applied == (0, 50)


def test_negative_lag_delays():
    x = np.vstack([np.arange(1.0, 11.0)])
    out = compensate_lag(_canon(x, ("ECG",)), [-8.0])  # -2 samples
    np.testing.assert_array_equal(out.signals[0], [0, 0, 1, 2, 3, 4, 5, 6, 7, 8])


def test_shift_too_large():
    with pytest.raises(ShiftTooLarge):
        compensate_lag(_canon(np.zeros((2, 40))), {"BP": 200.0})


def test_channel_classification():
    assert is_ecg_like("ECG") and is_ecg_like("MLII") and is_ecg_like("V5")
    assert is_bp_like("ABP") and is_bp_like("BP") and not is_bp_like("ECG")


def _raw_record(gain=1.0, fs=360, n=3600):
    rng = np.random.default_rng(11)
    t = np.arange(n) / fs
    ecg = np.sin(2 * np.pi * 1.2 * t) ** 15 + 0.3 * np.sin(2 * np.pi * 0.2 * t) + 0.02 * rng.normal(size=n)
    bp = 80 + 20 * np.sin(2 * np.pi * 1.2 * t)
    return Record("r", fs, (ChannelMeta("ECG"), ChannelMeta("BP")), gain * np.vstack([ecg, bp]))


def test_preprocess_output_contract():
    out = preprocess_record(_raw_record())
    assert out.fs == 250 and out.n_samples == 2500
    assert np.all(np.abs(out.signals) <= 1.0)
    assert out.lag_applied == (0, 50)


def test_preprocess_plain_profile_has_no_lag():
    out = preprocess_record(_raw_record(), PreprocessConfig(profile="plain"))
    assert out.lag_applied == (0, 0)


@pytest.mark.parametrize("gain", [0.001, 7.5, 1000.0])
def test_preprocess_gain_invariance(gain):
    a = preprocess_record(_raw_record(1.0)).signals
    b = preprocess_record(_raw_record(gain)).signals
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_baseline_only_on_ecg_like():
    out = preprocess_record(_raw_record(), PreprocessConfig(profile="plain"))
    # BP keeps its positive offset (no baseline removal), so it never goes negative
    assert out.signals[1].min() > 0
    assert out.signals[0].min() < 0
