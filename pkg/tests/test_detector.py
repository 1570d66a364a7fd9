import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cifbeat.detector import detect, drop_short_pulses, extract_beats, fill_short_gaps, runs, trace_table
from cifbeat.errors import RecordTooShort
from cifbeat.model import CifArchitecture, CifModel
from cifbeat.preprocess import CanonicalRecord
from cifbeat.record_io import ChannelMeta

from oracles import oracle_drop_pulses, oracle_fill_gaps, oracle_midpoints, rle, unrle

tracks = st.lists(st.integers(0, 1), max_size=300)


def _track(*runs_):
    return np.array(unrle([list(r) for r in runs_]), dtype=np.uint8)


@settings(max_examples=200, deadline=None)
@given(tracks)
def test_runs_match_rle_oracle(t):
    values, starts, lengths = runs(t)
    assert [[int(v), int(n)] for v, n in zip(values, lengths)] == rle(t)
    assert starts.tolist() == np.concatenate(([0], np.cumsum(lengths)[:-1])).tolist()[:len(starts)]


@settings(max_examples=200, deadline=None)
@given(tracks, st.integers(1, 6))
def test_fill_gaps_matches_oracle(t, g):
    assert fill_short_gaps(np.array(t, np.uint8), g).track.tolist() == oracle_fill_gaps(t, g)


@settings(max_examples=200, deadline=None)
@given(tracks, st.integers(1, 60))
def test_drop_pulses_matches_oracle(t, p):
    assert drop_short_pulses(np.array(t, np.uint8), p).track.tolist() == oracle_drop_pulses(t, p)


def test_gap_boundary():
    two = _track((1, 5), (0, 2), (1, 5))
    three = _track((1, 5), (0, 3), (1, 5))
    assert fill_short_gaps(two).track.sum() == 12
    assert fill_short_gaps(three).track.sum() == 10


def test_leading_and_trailing_zero_runs_are_not_gaps():
    t = _track((0, 1), (1, 5), (0, 1))
    assert fill_short_gaps(t).track.tolist() == t.tolist()


def test_pulse_boundary():
    assert drop_short_pulses(_track((0, 3), (1, 49), (0, 3))).track.sum() == 0
    assert drop_short_pulses(_track((0, 3), (1, 50), (0, 3))).track.sum() == 50


@pytest.mark.parametrize("a,b,beat", [(100, 174, 137), (100, 175, 137), (0, 0, 0)])
def test_midpoint_examples(a, b, beat):
    t = np.zeros(300, np.uint8)
    t[a:b + 1] = 1
    assert extract_beats(t).beat_samples.tolist() == [beat]


@settings(max_examples=200, deadline=None)
@given(tracks)
def test_midpoints_match_oracle(t):
    assert extract_beats(np.array(t, np.uint8)).beat_samples.tolist() == oracle_midpoints(t)


def _canon(n, k=2):
    sig = np.random.default_rng(0).uniform(-1, 1, (k, n))
    return CanonicalRecord("r", tuple(ChannelMeta(f"C{i}") for i in range(k)), sig)


def test_zero_model_fires_everywhere_inside():
    # probability 0.5 everywhere meets the >= 0.5 threshold
    model = CifModel.zeros(CifArchitecture(2))
    res = detect(_canon(1000), model)
    assert res.raw[:125].sum() == 0 and res.raw[-125:].sum() == 0
    assert res.raw[125:875].all()
    assert res.beat_samples.tolist() == [(125 + 874) // 2]


def test_negative_bias_model_detects_nothing():
    model = CifModel.zeros(CifArchitecture(2))
    model.out_bias[:] = -1.0
    res = detect(_canon(1000), model)
    assert len(res.beat_samples) == 0


def test_record_too_short():
    with pytest.raises(RecordTooShort):
        detect(_canon(250), CifModel.zeros(CifArchitecture(2)))


def test_trace_table_columns():
    rec = _canon(400)
    res = detect(rec, CifModel.zeros(CifArchitecture(2)))
    cols, data = trace_table(rec, res)
    assert cols == ["sample", "C0", "C1", "probability", "raw", "cleaned", "beat"]
    assert data.shape == (400, 7)
    assert np.isnan(data[0, 3]) and data[125, 3] == 0.5
