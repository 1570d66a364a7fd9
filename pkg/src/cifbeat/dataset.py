"""Labelled training snippets built from canonical records.

Each annotated beat becomes a 75-sample location pulse (beat +/- 37 samples
at 250 Hz). A 251-sample snippet is labelled 1 when its middle sample falls
inside a pulse.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BadMagic, NoPositives, RecordTooShort, TruncatedPayload, VersionMismatch
from .preprocess import CanonicalRecord
from .record_io import AnnotationSet

SNIPPET_LEN = 251
SNIPPET_MID = SNIPPET_LEN // 2
PULSE_HALF_WIDTH = 37
TRAIN_OVERLAP = 150
TRAIN_STRIDE = SNIPPET_LEN - TRAIN_OVERLAP

_MAGIC = b"CIFT"
_VERSION = 1
_HEAD = struct.Struct("<4sIIIIq")  # magic, version, K, M, count, seed


def build_pulse_track(annotations: AnnotationSet | Sequence[int], length: int,
                      half_width: int = PULSE_HALF_WIDTH) -> np.ndarray:
    """Binary track with ones on ``[beat - half_width, beat + half_width]``."""
    beats = getattr(annotations, "beat_samples", annotations)
    beats = np.asarray(beats, dtype=np.int64)
    # difference array: +1 at run starts, -1 one past run ends
    diff = np.zeros(length + 1, dtype=np.int64)
    starts = np.clip(beats - half_width, 0, length)
    stops = np.clip(beats + half_width + 1, 0, length)
    np.add.at(diff, starts, 1)
    np.add.at(diff, stops, -1)
    return (np.cumsum(diff[:-1]) > 0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class LabeledSnippet:
    window: np.ndarray  # (K, M)
    label: int
    origin: tuple[str, int]
    mask: tuple[bool, ...]


@dataclass(eq=False)
class TrainingSet:
    """Snippets stored as stacked arrays.

    ``windows`` is ``(N, K, M)``, ``labels`` ``(N,)`` and ``masks`` ``(N, K)``
    with ``True`` for channels left intact. ``record_index`` and ``starts``
    locate each snippet in ``record_ids``.
    """

    windows: np.ndarray
    labels: np.ndarray
    masks: np.ndarray
    seed: int = 0
    record_ids: tuple[str, ...] = ()
    record_index: np.ndarray | None = None
    starts: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.labels)
        if self.record_index is None:
            self.record_index = np.full(n, -1, dtype=np.int64)
        if self.starts is None:
            self.starts = np.full(n, -1, dtype=np.int64)

    def __len__(self):
        return len(self.labels)

    @property
    def n_channels(self) -> int:
        return self.windows.shape[1]

    @property
    def snippet_len(self) -> int:
        return self.windows.shape[2]

    @property
    def n0(self) -> int:
        return int(np.sum(self.labels == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.labels == 1))

    def snippet(self, i: int) -> LabeledSnippet:
        rid = self.record_ids[self.record_index[i]] if self.record_index[i] >= 0 else ""
        return LabeledSnippet(
            self.windows[i], int(self.labels[i]), (rid, int(self.starts[i])),
            tuple(bool(m) for m in self.masks[i]),
        )

    def subset(self, idx) -> "TrainingSet":
        idx = np.asarray(idx)
        return TrainingSet(
            self.windows[idx], self.labels[idx], self.masks[idx], self.seed,
            self.record_ids, self.record_index[idx], self.starts[idx],
        )

    @classmethod
    def concatenate(cls, parts: Sequence["TrainingSet"], seed: int = 0) -> "TrainingSet":
        ids: list[str] = []
        rec_idx = []
        for part in parts:
            remap = []
            for rid in part.record_ids:
                if rid not in ids:
                    ids.append(rid)
                remap.append(ids.index(rid))
            remap = np.array(remap + [-1], dtype=np.int64)
            rec_idx.append(remap[part.record_index])
        return cls(
            np.concatenate([p.windows for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.masks for p in parts]),
            seed,
            tuple(ids),
            np.concatenate(rec_idx),
            np.concatenate([p.starts for p in parts]),
        )


def snippet_count(length: int, stride: int = TRAIN_STRIDE, width: int = SNIPPET_LEN) -> int:
    return (length - width) // stride + 1 if length >= width else 0


def extract_snippets(record: CanonicalRecord, track: np.ndarray,
                     stride: int = TRAIN_STRIDE) -> TrainingSet:
    """Cut windows starting at 0, ``stride`` apart, labelled by their middle sample."""
    n = record.n_samples
    if n < SNIPPET_LEN:
        raise RecordTooShort(f"{record.record_id}: {n} samples < snippet length {SNIPPET_LEN}")
    if len(track) != n:
        raise ValueError("pulse track and record lengths differ")
    starts = np.arange(snippet_count(n, stride)) * stride
    idx = starts[:, None] + np.arange(SNIPPET_LEN)[None, :]
    windows = np.ascontiguousarray(record.signals[:, idx].transpose(1, 0, 2))
    labels = np.asarray(track)[starts + SNIPPET_MID].astype(np.uint8)
    masks = np.ones((len(starts), record.n_channels), dtype=bool)
    return TrainingSet(
        windows, labels, masks, 0, (record.record_id,),
        np.zeros(len(starts), dtype=np.int64), starts.astype(np.int64),
    )


def augment_channel_dropout(snippets: TrainingSet) -> TrainingSet:
    """Append, per snippet, K copies each keeping a single channel.

    Output order: all originals, then every snippet with only channel 0 kept,
    then only channel 1, and so on.
    """
    k = snippets.n_channels
    if k < 2:
        raise ValueError("channel dropout needs at least two channels")
    parts_w = [snippets.windows]
    parts_m = [snippets.masks]
    for keep in range(k):
        w = np.zeros_like(snippets.windows)
        w[:, keep, :] = snippets.windows[:, keep, :]
        m = np.zeros_like(snippets.masks)
        m[:, keep] = snippets.masks[:, keep]
        parts_w.append(w)
        parts_m.append(m)
    reps = k + 1
    return TrainingSet(
        np.concatenate(parts_w),
        np.tile(snippets.labels, reps),
        np.concatenate(parts_m),
        snippets.seed,
        snippets.record_ids,
        np.tile(snippets.record_index, reps),
        np.tile(snippets.starts, reps),
    )


def balance_classes(snippets: TrainingSet, seed: int) -> TrainingSet:
    """Drop uniformly chosen label-0 snippets until ``n0 <= n1``.

    Survivors keep their original relative order.
    """
    labels = snippets.labels
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0:
        raise NoPositives("no label-1 snippets to balance against")
    if len(neg) > len(pos):
        rng = np.random.default_rng(seed)
        neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    keep = np.sort(np.concatenate([pos, neg]))
    out = snippets.subset(keep)
    out.seed = seed
    return out


def build_training_set(pairs: Iterable[tuple[CanonicalRecord, AnnotationSet]], seed: int = 0,
                       stride: int = TRAIN_STRIDE, augment: bool = True) -> TrainingSet:
    """Snippets from every record, augmented, then class balanced."""
    parts = []
    for record, ann in pairs:
        track = build_pulse_track(ann.rescaled(record.fs), record.n_samples)
        parts.append(extract_snippets(record, track, stride))
    if not parts:
        raise NoPositives("no records given")
    full = TrainingSet.concatenate(parts, seed)
    if augment and full.n_channels >= 2:
        full = augment_channel_dropout(full)
    return balance_classes(full, seed)


def save_training_set(ts: TrainingSet, path) -> Path:
    """Write the flat binary layout.

    Header ``<4sIIIIq`` (magic ``CIFT``, version, K, M, count, seed), then
    float32 windows row-major ``(count, K, M)``, uint8 labels ``(count,)``,
    uint8 masks ``(count, K)``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, k, m = ts.windows.shape
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(_HEAD.pack(_MAGIC, _VERSION, k, m, n, int(ts.seed)))
        fh.write(np.ascontiguousarray(ts.windows, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ts.labels, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(ts.masks, dtype=np.uint8).tobytes())
    os.replace(tmp, path)
    return path


def load_training_set(path) -> TrainingSet:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size or data[:4] != _MAGIC:
        raise BadMagic(f"{path}: not a training-set file")
    _, version, k, m, n, seed = _HEAD.unpack_from(data)
    if version != _VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {_VERSION}")
    sizes = (4 * n * k * m, n, n * k)
    if len(data) < _HEAD.size + sum(sizes):
        raise TruncatedPayload(f"{path}: file is truncated")
    off = _HEAD.size
    windows = np.frombuffer(data, "<f4", n * k * m, off).reshape(n, k, m).astype(np.float64)
    off += sizes[0]
    labels = np.frombuffer(data, np.uint8, n, off).copy()
    off += sizes[1]
    masks = np.frombuffer(data, np.uint8, n * k, off).reshape(n, k).astype(bool)
    return TrainingSet(windows, labels, masks, seed)
