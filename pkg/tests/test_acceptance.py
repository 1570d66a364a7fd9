"""Acceptance gate: one test per criterion, each at its stated tolerance.

Every test records its measured values with ``record_property``; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from cifbeat.detector import detect, drop_short_pulses, fill_short_gaps
from cifbeat.model import CifArchitecture, CifModel, TrainConfig, conv_forward, load_model, model_to_bytes, save_model, train
from cifbeat.dataset import build_training_set
from cifbeat.preprocess import preprocess_record
from cifbeat.record_io import AnnotationSet, decode_fmt212, encode_fmt212, load_annotations, write_annotations
from cifbeat.scorer import RecordScore, challenge_score, gross_rates, match_beats, score_records
from cifbeat.synth import SynthConfig, corpus_configs, generate

from gradcheck import worst_relative_error
from oracles import oracle_drop_pulses, oracle_fill_gaps, oracle_max_matching
from pipeline import run_pipeline


def test_criterion_1_scorer_fixtures(record_property):
    t0 = time.perf_counter()
    se_g, ppv_g = gross_rates(109422, 103, 72)
    overall = challenge_score(92.85, 94.29, 93.41, 95.47)
    r105 = RecordScore.from_table("105", 2572, 11, 12)
    elapsed = time.perf_counter() - t0
    got = ["%.2f" % v for v in (se_g, ppv_g, overall, r105.Se, r105.PPV)]
    record_property("values", "/".join(got))
    assert got == ["99.93", "99.91", "94.00", "99.53", "99.57"]
    assert 109422 + 72 == 109494
    assert elapsed < 1.0


def test_criterion_2_gradient_correctness(record_property):
    t0 = time.perf_counter()
    errors = [worst_relative_error(seed, hidden) for seed in range(12) for hidden in (0, 4)]
    elapsed = time.perf_counter() - t0
    record_property("instances", len(errors))
    record_property("worst_rel_err", f"{max(errors):.2e}")
    assert len(errors) >= 20
    assert max(errors) < 1e-5
    assert elapsed < 10.0


def test_criterion_3_shape_law(record_property):
    x = np.zeros((2, 251))
    for p in (1, 2, 3):
        for L in (1, 20, 150, 250):
            arch = CifArchitecture(2, 251, p, L)
            assert arch.feature_len == p * (251 - L + 1)
            assert conv_forward(x, CifModel.zeros(arch)).shape == (p * (251 - L + 1),)
    headline = CifArchitecture(2, 251, 2, 20).feature_len
    record_property("F(p=2,L=20)", headline)
    assert headline == 464


def _run_track(rng, n):
    # run-structured tracks so gap and pulse lengths near 2/3 and 49/50 are common
    out = []
    v = int(rng.integers(0, 2))
    while len(out) < n:
        if rng.random() < 0.3:
            length = int(rng.choice([1, 2, 3, 4, 48, 49, 50, 51]))
        else:
            length = int(rng.integers(1, 120))
        out += [v] * length
        v = 1 - v
    return out[:n]


def test_criterion_4_postprocessing_oracle(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fixed = [
        [1] * 5 + [0] * 2 + [1] * 5, [1] * 5 + [0] * 3 + [1] * 5,
        [0] * 3 + [1] * 49 + [0] * 3, [0] * 3 + [1] * 50 + [0] * 3,
        [], [0], [1], [0, 0, 1, 1, 0, 0],
    ]
    tracks = fixed + [_run_track(rng, int(rng.integers(1, 2001))) for _ in range(1000 - len(fixed))]
    for t in tracks:
        arr = np.array(t, dtype=np.uint8)
        filled = fill_short_gaps(arr, 3).track
        assert filled.tolist() == oracle_fill_gaps(t, 3)
        assert drop_short_pulses(arr, 50).track.tolist() == oracle_drop_pulses(t, 50)
        assert drop_short_pulses(filled, 50).track.tolist() == oracle_drop_pulses(oracle_fill_gaps(t, 3), 50)
    elapsed = time.perf_counter() - t0
    record_property("tracks", len(tracks))
    assert len(tracks) == 1000
    assert elapsed < 5.0


def test_criterion_5_matching_optimality(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(500):
        span = int(rng.integers(50, 800))
        ref = np.sort(rng.choice(span, int(rng.integers(0, 13)), replace=False))
        est = np.sort(rng.choice(span, int(rng.integers(0, 13)), replace=False))
        tp, fp, fn = match_beats(ref, est)
        assert tp == oracle_max_matching(ref.tolist(), est.tolist(), 37)
        assert (fp, fn) == (len(est) - tp, len(ref) - tp)
    elapsed = time.perf_counter() - t0
    record_property("trials", 500)
    assert elapsed < 30.0


def test_criterion_6_end_to_end_synthetic(record_property):
    t0 = time.perf_counter()
    base = SynthConfig(duration_s=300.0, fs=360)
    configs = corpus_configs(20, base, seed=7)
    pairs = []
    for cfg in configs:
        rec, ann = generate(cfg)
        canon = preprocess_record(rec)
        pairs.append((canon, ann.rescaled(canon.fs)))
    ts = build_training_set(pairs[:15], seed=0)
    model = train(ts, CifArchitecture(2), TrainConfig())

    def score(held_out):
        return score_records([(ann, detect(rec, model)) for rec, ann in held_out]).score

    clean = score(pairs[15:])
    dropped = {}
    for ch in ("ECG", "BP"):
        held = []
        for cfg in configs[15:]:
            rec, ann = generate(replace(cfg, dropout=((0.0, cfg.duration_s, ch),)))
            canon = preprocess_record(rec)
            held.append((canon, ann.rescaled(canon.fs)))
        dropped[ch] = score(held)
    elapsed = time.perf_counter() - t0
    record_property("clean", f"{clean:.2f}")
    record_property("ECG_dropped", f"{dropped['ECG']:.2f}")
    record_property("BP_dropped", f"{dropped['BP']:.2f}")
    record_property("seconds", f"{elapsed:.0f}")
    assert clean >= 98.0
    assert min(dropped.values()) >= 90.0
    assert elapsed < 15 * 60


def test_criterion_7_determinism(tmp_path, record_property):
    a, b = tmp_path / "a", tmp_path / "b"
    run_pipeline(a)
    run_pipeline(b)
    assert (a / "model.cif").read_bytes() == (b / "model.cif").read_bytes()
    est = sorted(p.name for p in (a / "est").glob("*.ann"))
    assert est and est == sorted(p.name for p in (b / "est").glob("*.ann"))
    for name in est:
        assert (a / "est" / name).read_bytes() == (b / "est" / name).read_bytes()
    assert (a / "score.tsv").read_bytes() == (b / "score.tsv").read_bytes()
    record_property("files_compared", len(est) + 2)


def test_criterion_8_format_round_trips(tmp_path, record_property):
    t0 = time.perf_counter()
    vals = np.arange(-2048, 2048, dtype=np.int16)
    for s in range(0, 4096, 512):
        inter = np.empty(2 * 512 * 4096, dtype=np.int16)
        inter[0::2] = np.repeat(vals[s:s + 512], 4096)
        inter[1::2] = np.tile(vals, 512)
        data = encode_fmt212(inter)
        assert np.array_equal(decode_fmt212(data, len(inter)), inter)
        assert encode_fmt212(decode_fmt212(data, len(inter))) == data

    for hidden in (0, 3):
        model = CifModel.initialize(CifArchitecture(2, 251, 2, 20, hidden), seed=hidden)
        path = save_model(model, tmp_path / f"m{hidden}.cif")
        assert model_to_bytes(load_model(path)) == path.read_bytes()
        assert load_model(path).equals(model)

    ann = AnnotationSet("rt", np.random.default_rng(1).choice(10**6, 2000, replace=False), 250)
    for units in ("samples", "seconds"):
        path = write_annotations(ann, tmp_path / f"rt_{units}.ann", units)
        assert load_annotations(path, 250) == ann
    elapsed = time.perf_counter() - t0
    record_property("fmt212_pairs", 4096 * 4096)
    assert elapsed < 5.0
