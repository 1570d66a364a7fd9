"""Seeded synthetic ECG/BP records with exact beat annotations.

Beats follow a jittered RR process. ECG-like channels carry a Ricker
(negative second-derivative-of-Gaussian) spike centred on each beat, a small
T wave, a slow baseline drift and white noise. BP-like channels carry a
raised-cosine pressure pulse delayed by ``bp_lag_ms`` on top of a constant
mean pressure. No physiological realism is intended.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadConfig
from .record_io import AnnotationSet, ChannelMeta, Record, write_annotations, write_record

TEMPLATES = ("qrs_spike", "bp_pulse")


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    template: str
    noise_std: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise BadConfig(f"unknown template {self.template!r}; choose from {TEMPLATES}")


DEFAULT_CHANNELS = (
    ChannelSpec("ECG", "qrs_spike", noise_std=0.1, amplitude=1.0),
    ChannelSpec("BP", "bp_pulse", noise_std=2.0, amplitude=40.0),
)


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 300.0
    fs: int = 250
    rr_mean_ms: float = 800.0
    rr_jitter_ms: float = 40.0
    channels: tuple[ChannelSpec, ...] = DEFAULT_CHANNELS
    # (start_s, end_s, channel index or name)
    dropout: tuple[tuple[float, float, object], ...] = ()
    bp_lag_ms: float = 200.0
    drift_amplitude: float = 0.3
    drift_hz: float = 0.25
    t_wave_amplitude: float = 0.25
    bp_mean: float = 80.0
    seed: int = 0
    record_id: str = "syn"

    def validate(self) -> None:
        if self.fs <= 0 or self.duration_s <= 0:
            raise BadConfig("fs and duration_s must be positive")
        if self.rr_mean_ms <= 2 * 150:
            raise BadConfig("rr_mean_ms must exceed twice the 150 ms tolerance")
        if self.rr_jitter_ms < 0 or self.rr_mean_ms - 3 * self.rr_jitter_ms <= 0:
            raise BadConfig("rr_jitter_ms must be >= 0 and < rr_mean_ms / 3")
        if self.duration_s * 1000.0 / self.rr_mean_ms < 10:
            raise BadConfig("duration too short for 10 beats")
        if not self.channels:
            raise BadConfig("at least one channel is required")
        names = [c.name for c in self.channels]
        for start, end, ch in self.dropout:
            if not 0 <= start < end:
                raise BadConfig(f"bad dropout span ({start}, {end})")
            if not (ch in names or (isinstance(ch, int) and 0 <= ch < len(names))):
                raise BadConfig(f"dropout channel {ch!r} not in {names}")


def beat_samples(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Jittered RR process; intervals are clipped to ``mean +/- 3 * jitter``."""
    n = int(round(config.duration_s * config.fs))
    rr = config.rr_mean_ms / 1000.0
    jit = config.rr_jitter_ms / 1000.0
    t = rng.uniform(0.25, 1.0) * rr
    beats = []
    while True:
        idx = int(np.floor(t * config.fs + 0.5))
        if idx >= n:
            break
        beats.append(idx)
        t += rr + float(np.clip(rng.normal(0.0, jit), -3 * jit, 3 * jit)) if jit else rr
    return np.array(beats, dtype=np.int64)


def _ricker(t: np.ndarray, sigma: float) -> np.ndarray:
    u = (t / sigma) ** 2
    return (1.0 - u) * np.exp(-u / 2.0)


def _raised_cosine(t: np.ndarray, width: float) -> np.ndarray:
    inside = np.abs(t) <= width / 2
    return np.where(inside, 0.5 * (1.0 + np.cos(2 * np.pi * t / width)), 0.0)


def _place(n: int, fs: int, beats: np.ndarray, shape, offset_s: float, half_span_s: float) -> np.ndarray:
    out = np.zeros(n)
    half = int(np.ceil(half_span_s * fs))
    rel = np.arange(-half, half + 1)
    kernel = shape(rel / fs)
    shift = int(np.floor(offset_s * fs + 0.5))
    for b in beats:
        idx = rel + b + shift
        ok = (idx >= 0) & (idx < n)
        out[idx[ok]] += kernel[ok]
    return out


def generate(config: SynthConfig) -> tuple[Record, AnnotationSet]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    fs = config.fs
    n = int(round(config.duration_s * fs))
    beats = beat_samples(config, rng)
    t = np.arange(n) / fs

    rows, metas = [], []
    for spec in config.channels:
        if spec.template == "qrs_spike":
            x = spec.amplitude * _place(n, fs, beats, lambda s: _ricker(s, 0.012), 0.0, 0.08)
            x += spec.amplitude * config.t_wave_amplitude * _place(
                n, fs, beats, lambda s: np.exp(-0.5 * (s / 0.04) ** 2), 0.25, 0.16
            )
            phase = rng.uniform(0, 2 * np.pi)
            x += config.drift_amplitude * np.sin(2 * np.pi * config.drift_hz * t + phase)
            meta = ChannelMeta(spec.name, "mV", 1000.0, 0)
        else:
            x = config.bp_mean + spec.amplitude * _place(
                n, fs, beats, lambda s: _raised_cosine(s, 0.4), config.bp_lag_ms / 1000.0, 0.2
            )
            meta = ChannelMeta(spec.name, "mmHg", 100.0, 0)
        if spec.noise_std:
            x = x + rng.normal(0.0, spec.noise_std, n)
        rows.append(x)
        metas.append(meta)

    names = [c.name for c in config.channels]
    for start, end, ch in config.dropout:
        k = names.index(ch) if ch in names else int(ch)
        a = int(np.floor(start * fs + 0.5))
        b = min(n, int(np.floor(end * fs + 0.5)))
        rows[k][a:b] = 0.0

    record = Record(config.record_id, fs, tuple(metas), np.vstack(rows))
    return record, AnnotationSet(config.record_id, beats, fs)


def corpus_configs(n_records: int, base: SynthConfig = SynthConfig(), seed: int = 0) -> list[SynthConfig]:
    return [
        replace(base, seed=seed * 100003 + i, record_id=f"{base.record_id}{i:03d}")
        for i in range(n_records)
    ]


def write_corpus(configs: Sequence[SynthConfig], out_dir, fmt: str = "i16le") -> list[Path]:
    """Write ``<id>.json`` + payload and ``<id>.ann`` for every config."""
    out_dir = Path(out_dir)
    headers = []
    for cfg in configs:
        record, ann = generate(cfg)
        headers.append(write_record(record, out_dir, fmt))
        write_annotations(ann, out_dir / f"{record.record_id}.ann")
    return headers
