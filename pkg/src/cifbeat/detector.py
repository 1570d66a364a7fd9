"""Sliding-window inference and pulse post-processing.

The trained network labels every stride-1 window; the label is written at
the window's middle sample. The resulting binary track is cleaned in two
passes (close short gaps, then drop short pulses) and each surviving pulse
contributes its midpoint as a beat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SNIPPET_MID
from .errors import RecordTooShort
from .model import DECISION_THRESHOLD, CifModel, window_probabilities
from .preprocess import CanonicalRecord
from .record_io import AnnotationSet

MIN_GAP = 3
MIN_PULSE = 50


@dataclass(frozen=True, eq=False)
class PulseEstimate:
    track: np.ndarray
    stage: str  # "raw", "filled" or "cleaned"

    def __len__(self):
        return len(self.track)


@dataclass(frozen=True, eq=False)
class DetectionResult:
    record_id: str
    beat_samples: np.ndarray
    fs: int = 250
    raw: np.ndarray | None = None
    cleaned: np.ndarray | None = None
    probabilities: np.ndarray | None = None

    def as_annotations(self) -> AnnotationSet:
        return AnnotationSet(self.record_id, self.beat_samples, self.fs)


def runs(track) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run-length encode a binary track into ``(values, starts, lengths)``."""
    t = np.asarray(track).astype(np.int8)
    if t.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    change = np.flatnonzero(np.diff(t)) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [len(t)])))
    return t[starts].astype(np.int64), starts, lengths


def infer_track(record: CanonicalRecord, model: CifModel,
                threshold: float = DECISION_THRESHOLD) -> PulseEstimate:
    track, _ = _infer(record, model, threshold)
    return track


def _infer(record, model, threshold):
    m = model.arch.snippet_len
    n = record.n_samples
    if n < m:
        raise RecordTooShort(f"{record.record_id}: {n} samples < window length {m}")
    probs = window_probabilities(record.signals, model)
    track = np.zeros(n, dtype=np.uint8)
    mid = m // 2
    track[mid : mid + len(probs)] = probs >= threshold
    return PulseEstimate(track, "raw"), probs


def fill_short_gaps(track: PulseEstimate | np.ndarray, min_gap: int = MIN_GAP) -> PulseEstimate:
    """Set to 1 every interior run of 0s shorter than ``min_gap``."""
    t = np.array(getattr(track, "track", track), dtype=np.uint8)
    values, starts, lengths = runs(t)
    for i in range(1, len(values) - 1):
        if values[i] == 0 and lengths[i] < min_gap:
            t[starts[i] : starts[i] + lengths[i]] = 1
    return PulseEstimate(t, "filled")


def drop_short_pulses(track: PulseEstimate | np.ndarray, min_pulse: int = MIN_PULSE) -> PulseEstimate:
    """Set to 0 every run of 1s shorter than ``min_pulse``."""
    t = np.array(getattr(track, "track", track), dtype=np.uint8)
    values, starts, lengths = runs(t)
    for v, s, n in zip(values, starts, lengths):
        if v == 1 and n < min_pulse:
            t[s : s + n] = 0
    return PulseEstimate(t, "cleaned")


def extract_beats(track: PulseEstimate | np.ndarray, record_id: str = "", fs: int = 250) -> DetectionResult:
    """One beat per run of 1s, at ``floor((first + last) / 2)``."""
    t = np.asarray(getattr(track, "track", track))
    values, starts, lengths = runs(t)
    ones = values == 1
    first, last = starts[ones], starts[ones] + lengths[ones] - 1
    return DetectionResult(record_id, (first + last) // 2, fs, cleaned=t)


def detect(record: CanonicalRecord, model: CifModel, threshold: float = DECISION_THRESHOLD,
           min_gap: int = MIN_GAP, min_pulse: int = MIN_PULSE) -> DetectionResult:
    raw, probs = _infer(record, model, threshold)
    cleaned = drop_short_pulses(fill_short_gaps(raw, min_gap), min_pulse)
    res = extract_beats(cleaned, record.record_id, record.fs)
    return DetectionResult(res.record_id, res.beat_samples, res.fs, raw.track, cleaned.track, probs)


def trace_table(record: CanonicalRecord, result: DetectionResult) -> tuple[list[str], np.ndarray]:
    """Per-sample columns for external plotting: signals, probability, raw and cleaned tracks."""
    n = record.n_samples
    prob = np.full(n, np.nan)
    if result.probabilities is not None:
        prob[SNIPPET_MID : SNIPPET_MID + len(result.probabilities)] = result.probabilities
    beats = np.zeros(n, dtype=np.uint8)
    beats[result.beat_samples] = 1
    cols = ["sample"] + record.channel_names + ["probability", "raw", "cleaned", "beat"]
    data = np.column_stack([np.arange(n), record.signals.T, prob, result.raw, result.cleaned, beats])
    return cols, data
