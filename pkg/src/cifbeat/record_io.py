"""Multichannel record and beat-annotation I/O.

A record on disk is a small JSON header plus one payload file::

    {"record_id": "r01", "fs": 360,
     "channels": [{"name": "ECG", "unit": "mV", "gain": 200, "baseline": 0}, ...],
     "payload": {"format": "i16le", "path": "r01.dat", "n_samples": 108000}}

``n_samples`` counts samples per channel. Binary payloads are frame
interleaved (channel 0, channel 1, ..., channel 0, ...). CSV payloads hold one
column per channel with an optional header row of channel names.

Annotation files are plain text: a first line ``units: samples`` or
``units: seconds``, then one beat time per line; ``#`` starts a comment.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadHeader, LengthMismatch, MissingPayload, NonNumericLine, TruncatedPayload

PAYLOAD_FORMATS = ("csv", "i16le", "f32le", "wfdb212")


@dataclass(frozen=True)
class ChannelMeta:
    name: str
    unit: str = ""
    gain: float = 1.0
    baseline: int = 0

    def __post_init__(self):
        if self.gain == 0:
            raise BadHeader(f"channel {self.name!r}: gain must be non-zero")


@dataclass(frozen=True, eq=False)
class Record:
    """Simultaneously sampled signals sharing one sampling rate.

    ``signals`` is a read-only ``(K, N)`` float64 array in physical units,
    row ``k`` belonging to ``channels[k]``.
    """

    record_id: str
    fs: int
    channels: tuple[ChannelMeta, ...]
    signals: np.ndarray
    start: float = 0.0

    def __post_init__(self):
        sig = np.array(self.signals, dtype=np.float64)
        if sig.ndim == 1:
            sig = sig[None, :]
        if sig.ndim != 2:
            raise LengthMismatch("signals must be a (channels, samples) array")
        sig.setflags(write=False)
        object.__setattr__(self, "signals", sig)
        object.__setattr__(self, "channels", tuple(self.channels))
        if int(self.fs) != self.fs or self.fs <= 0:
            raise BadHeader(f"fs must be a positive integer, got {self.fs!r}")
        object.__setattr__(self, "fs", int(self.fs))
        if len(self.channels) < 1:
            raise BadHeader("a record needs at least one channel")
        if len(self.channels) != sig.shape[0]:
            raise LengthMismatch(
                f"{len(self.channels)} channel descriptions but {sig.shape[0]} signals"
            )

    @property
    def n_channels(self) -> int:
        return self.signals.shape[0]

    @property
    def n_samples(self) -> int:
        return self.signals.shape[1]

    @property
    def end(self) -> float:
        return self.start + self.n_samples / self.fs

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]

    def __eq__(self, other):
        if not isinstance(other, Record):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.fs == other.fs
            and self.channels == other.channels
            and self.start == other.start
            and self.signals.shape == other.signals.shape
            and np.array_equal(self.signals, other.signals)
        )


@dataclass(frozen=True, eq=False)
class AnnotationSet:
    """Reference beat locations of one record, as sample indices at ``fs``."""

    record_id: str
    beat_samples: np.ndarray
    fs: int = 250

    def __post_init__(self):
        beats = np.unique(np.asarray(self.beat_samples, dtype=np.int64))
        beats.setflags(write=False)
        object.__setattr__(self, "beat_samples", beats)

    @property
    def count(self) -> int:
        return len(self.beat_samples)

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, AnnotationSet):
            return NotImplemented
        return (
            self.record_id == other.record_id
            and self.fs == other.fs
            and np.array_equal(self.beat_samples, other.beat_samples)
        )

    def check_within(self, n_samples: int) -> None:
        if self.count and (self.beat_samples[0] < 0 or self.beat_samples[-1] >= n_samples):
            raise LengthMismatch(
                f"{self.record_id}: annotations fall outside [0, {n_samples})"
            )

    def rescaled(self, fs_out: int) -> "AnnotationSet":
        """Map indices to another rate, rounding half up."""
        if fs_out == self.fs:
            return self
        # floor(t * fs_out / fs + 1/2) in exact integer arithmetic
        new = (2 * self.beat_samples * fs_out + self.fs) // (2 * self.fs)
        return AnnotationSet(self.record_id, new, fs_out)


# --------------------------------------------------------------------------
# Format 212


def _signext12(v: np.ndarray) -> np.ndarray:
    return np.where(v >= 2048, v - 4096, v)


def decode_fmt212(data: bytes, n_samples: int) -> np.ndarray:
    """Unpack 12-bit two's-complement samples stored two per three bytes.

    Returns the ``n_samples`` values in storage order, so for a two-channel
    file the result alternates channel A, channel B.
    """
    n_bytes = (3 * n_samples + 1) // 2
    if len(data) < n_bytes:
        raise TruncatedPayload(
            f"format 212 needs {n_bytes} bytes for {n_samples} samples, got {len(data)}"
        )
    n_groups = (n_samples + 1) // 2
    raw = np.zeros(3 * n_groups, dtype=np.int32)
    raw[:n_bytes] = np.frombuffer(bytes(data[:n_bytes]), dtype=np.uint8)
    b0, b1, b2 = raw[0::3], raw[1::3], raw[2::3]
    out = np.empty(2 * n_groups, dtype=np.int32)
    out[0::2] = _signext12(((b1 & 0x0F) << 8) | b0)
    out[1::2] = _signext12(((b1 & 0xF0) << 4) | b2)
    return out[:n_samples].astype(np.int16)


def encode_fmt212(samples: Sequence[int]) -> bytes:
    """Inverse of :func:`decode_fmt212`; values must lie in [-2048, 2047]."""
    s = np.asarray(samples, dtype=np.int32)
    if s.size and (s.min() < -2048 or s.max() > 2047):
        raise ValueError("format 212 holds 12-bit values in [-2048, 2047]")
    n = s.size
    if n % 2:
        s = np.append(s, 0)
    u = s & 0xFFF
    a, b = u[0::2], u[1::2]
    out = np.empty(3 * len(a), dtype=np.uint8)
    out[0::3] = a & 0xFF
    out[1::3] = ((a >> 8) & 0x0F) | ((b >> 4) & 0xF0)
    out[2::3] = b & 0xFF
    return out[: (3 * n + 1) // 2].tobytes()


# --------------------------------------------------------------------------
# Records


def _parse_header(header_path: Path) -> dict:
    try:
        header = json.loads(header_path.read_text())
    except FileNotFoundError:
        raise BadHeader(f"{header_path}: header file not found") from None
    except json.JSONDecodeError as exc:
        raise BadHeader(f"{header_path}: not valid JSON ({exc})") from None
    for key in ("record_id", "fs", "channels", "payload"):
        if key not in header:
            raise BadHeader(f"{header_path}: missing key {key!r}")
    payload = header["payload"]
    if not isinstance(payload, dict) or "format" not in payload or "path" not in payload:
        raise BadHeader(f"{header_path}: payload needs 'format' and 'path'")
    if payload["format"] not in PAYLOAD_FORMATS:
        raise BadHeader(f"{header_path}: unknown payload format {payload['format']!r}")
    if not isinstance(header["channels"], list) or not header["channels"]:
        raise BadHeader(f"{header_path}: 'channels' must be a non-empty list")
    return header


def _read_csv(path: Path, n_channels: int) -> np.ndarray:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if lines:
        try:
            [float(v) for v in lines[0].split(",")]
        except ValueError:
            lines = lines[1:]  # header row
    rows = []
    for ln in lines:
        cols = ln.split(",")
        if len(cols) != n_channels:
            raise LengthMismatch(
                f"{path}: expected {n_channels} columns, found {len(cols)}"
            )
        rows.append([float(v) if v.strip() else math.nan for v in cols])
    return np.array(rows, dtype=np.float64).reshape(-1, n_channels).T


def _read_payload(header: dict, base: Path) -> np.ndarray:
    payload = header["payload"]
    k = len(header["channels"])
    path = base / payload["path"]
    if not path.exists():
        raise MissingPayload(f"payload {path} does not exist")
    fmt = payload["format"]
    if fmt == "csv":
        data = _read_csv(path, k)
    else:
        raw = path.read_bytes()
        if fmt == "wfdb212":
            n_total = len(raw) * 2 // 3
            if "n_samples" in payload:
                n_total = int(payload["n_samples"]) * k
            flat = decode_fmt212(raw, n_total)
        else:
            dtype = np.dtype("<i2") if fmt == "i16le" else np.dtype("<f4")
            if len(raw) % (dtype.itemsize * k):
                raise LengthMismatch(
                    f"{path}: {len(raw)} bytes is not a whole number of {k}-channel frames"
                )
            flat = np.frombuffer(raw, dtype=dtype)
        if len(flat) % k:
            raise LengthMismatch(f"{path}: sample count not divisible by {k} channels")
        data = flat.reshape(-1, k).T.astype(np.float64)
    if "n_samples" in payload:
        n = int(payload["n_samples"])
        if data.shape[1] < n:
            raise TruncatedPayload(f"{path}: holds {data.shape[1]} samples, header says {n}")
        if data.shape[1] > n and fmt == "csv":
            raise LengthMismatch(f"{path}: holds {data.shape[1]} samples, header says {n}")
        data = data[:, :n]
    return data


def load_record(header_path) -> Record:
    """Load a record from its JSON header.

    Raw values are mapped to physical units with ``(raw - baseline) / gain``;
    channels without gain metadata are taken as already physical.
    Channels may also live in separate payloads: give each channel entry its
    own ``"payload"`` object instead of a record-level one.
    """
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except FileNotFoundError:
        raise BadHeader(f"{header_path}: header file not found") from None
    except json.JSONDecodeError as exc:
        raise BadHeader(f"{header_path}: not valid JSON ({exc})") from None
    base = header_path.parent
    per_channel = isinstance(header.get("channels"), list) and all(
        isinstance(c, dict) and "payload" in c for c in header["channels"]
    ) and "payload" not in header
    if per_channel:
        rows = []
        for ch in header["channels"]:
            sub = dict(header, channels=[ch], payload=ch["payload"])
            rows.append(_read_payload(_validated(sub, header_path), base)[0])
        lengths = {len(r) for r in rows}
        if len(lengths) > 1:
            raise LengthMismatch(
                f"{header_path}: channel payload lengths differ {sorted(lengths)}"
            )
        raw = np.vstack(rows)
    else:
        header = _parse_header(header_path)
        raw = _read_payload(header, base)

    channels = []
    for k, ch in enumerate(header["channels"]):
        if not isinstance(ch, dict) or "name" not in ch:
            raise BadHeader(f"{header_path}: channel {k} lacks a name")
        channels.append(
            ChannelMeta(
                name=str(ch["name"]),
                unit=str(ch.get("unit", "")),
                gain=float(ch.get("gain", 1.0)),
                baseline=int(ch.get("baseline", 0)),
            )
        )
    gains = np.array([c.gain for c in channels])[:, None]
    baselines = np.array([c.baseline for c in channels], dtype=np.float64)[:, None]
    signals = (raw - baselines) / gains
    return Record(
        record_id=str(header["record_id"]),
        fs=header["fs"],
        channels=tuple(channels),
        signals=signals,
        start=float(header.get("start", 0.0)),
    )


def _validated(header: dict, header_path: Path) -> dict:
    payload = header["payload"]
    if not isinstance(payload, dict) or payload.get("format") not in PAYLOAD_FORMATS:
        raise BadHeader(f"{header_path}: bad channel payload {payload!r}")
    if "path" not in payload:
        raise BadHeader(f"{header_path}: payload needs 'path'")
    return header


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_record(record: Record, directory, fmt: str = "f32le", extra: dict | None = None) -> Path:
    """Write ``record`` as ``<record_id>.json`` plus payload; return the header path.

    Integer formats quantise ``value * gain + baseline`` to the nearest
    integer, so round trips are exact only for f32-representable (``f32le``)
    or quantised (``i16le``/``wfdb212``) data. ``csv`` is lossless.
    """
    if fmt not in PAYLOAD_FORMATS:
        raise BadHeader(f"unknown payload format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = {"csv": ".csv", "i16le": ".i16", "f32le": ".f32", "wfdb212": ".dat"}[fmt]
    payload_name = record.record_id + ext
    sig = record.signals
    if fmt == "csv":
        lines = [",".join(record.channel_names)]
        lines += [",".join(repr(float(v)) for v in col) for col in sig.T]
        data = ("\n".join(lines) + "\n").encode()
        gains = [1.0] * record.n_channels
        baselines = [0] * record.n_channels
    elif fmt == "f32le":
        data = np.ascontiguousarray(sig.T, dtype="<f4").tobytes()
        gains = [1.0] * record.n_channels
        baselines = [0] * record.n_channels
    else:
        gains = [c.gain for c in record.channels]
        baselines = [c.baseline for c in record.channels]
        q = np.floor(sig * np.array(gains)[:, None] + np.array(baselines)[:, None] + 0.5)
        lo, hi = (-32768, 32767) if fmt == "i16le" else (-2048, 2047)
        q = np.clip(q, lo, hi).astype(np.int32)
        if fmt == "i16le":
            data = np.ascontiguousarray(q.T, dtype="<i2").tobytes()
        else:
            data = encode_fmt212(q.T.ravel())
    header = {
        "record_id": record.record_id,
        "fs": record.fs,
        "channels": [
            {"name": c.name, "unit": c.unit, "gain": g, "baseline": b}
            for c, g, b in zip(record.channels, gains, baselines)
        ],
        "payload": {"format": fmt, "path": payload_name, "n_samples": record.n_samples},
    }
    if record.start:
        header["start"] = record.start
    if extra:
        header.update(extra)
    _atomic_write(directory / payload_name, data)
    header_path = directory / f"{record.record_id}.json"
    _atomic_write(header_path, (json.dumps(header, indent=2) + "\n").encode())
    return header_path


# --------------------------------------------------------------------------
# Annotations


def _seconds_to_sample(text: str, fs: int) -> int:
    t = Decimal(text)
    return int((t * fs).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def load_annotations(path, fs: int, record_id: str | None = None) -> AnnotationSet:
    """Read a beat annotation text file into sorted, de-duplicated indices.

    Times in seconds become ``round(t * fs)`` with halves rounded up. A file
    without a ``units:`` line is read as samples. Without ``record_id`` the
    id comes from a ``# record X fs N`` comment, else the file name.
    """
    path = Path(path)
    units = "samples"
    beats = []
    seen_content = False
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if not seen_content and text.lower().startswith("units:"):
            units = text.split(":", 1)[1].strip().lower()
            if units not in ("samples", "seconds"):
                raise NonNumericLine(f"{path}:{lineno}: unknown units {units!r}")
            seen_content = True
            continue
        seen_content = True
        try:
            if units == "seconds":
                beats.append(_seconds_to_sample(text, fs))
            else:
                value = Decimal(text)
                if value != value.to_integral_value():
                    raise NonNumericLine(f"{path}:{lineno}: sample index {text!r} is not an integer")
                beats.append(int(value))
        except InvalidOperation:
            raise NonNumericLine(f"{path}:{lineno}: cannot parse {text!r}") from None
    rid = record_id if record_id is not None else _header_comment(path)[0] or path.name.split(".")[0]
    return AnnotationSet(rid, np.array(beats, dtype=np.int64), fs)


def write_annotations(ann: AnnotationSet, path, units: str = "samples") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if units == "samples":
        body = "\n".join(str(int(b)) for b in ann.beat_samples)
    elif units == "seconds":
        body = "\n".join(repr(int(b) / ann.fs) for b in ann.beat_samples)
    else:
        raise ValueError(f"units must be 'samples' or 'seconds', not {units!r}")
    text = f"units: {units}\n# record {ann.record_id} fs {ann.fs}\n" + body
    _atomic_write(path, (text + "\n").encode())
    return path


def _header_comment(path) -> tuple[str | None, int | None]:
    """``(record_id, fs)`` from a ``# record X fs N`` comment near the top."""
    for line in Path(path).read_text().splitlines()[:3]:
        parts = line.lstrip("#").split()
        if line.startswith("#") and len(parts) == 4 and parts[0] == "record" and parts[2] == "fs":
            try:
                return parts[1], int(parts[3])
            except ValueError:
                return parts[1], None
    return None, None


def read_fs_comment(path) -> int | None:
    """Return the ``fs`` stored in a comment written by :func:`write_annotations`."""
    return _header_comment(path)[1]
    return None
