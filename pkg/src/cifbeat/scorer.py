"""Beat matching and the four-way Se/PPV challenge score.

A detection is a true positive when it lies within ``floor(tol_ms * fs / 1000)``
samples (37 at 250 Hz, 150 ms) of a reference beat, each beat used once.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInput, UnknownFormat

TOLERANCE_MS = 150
TSV_COLUMNS = ("rec", "peaks", "FP", "FN", "Se", "PPV")


def tolerance_samples(fs: int = 250, tol_ms: float = TOLERANCE_MS) -> int:
    # integer arithmetic when possible so 150 ms at 250 Hz is exactly 37
    if float(tol_ms).is_integer():
        return int(tol_ms) * int(fs) // 1000
    return int(np.floor(tol_ms * fs / 1000))


def match_beats(ref, est, fs: int = 250, tol_ms: float = TOLERANCE_MS) -> tuple[int, int, int]:
    """Greedy one-to-one matching of two sorted beat lists.

    Returns ``(TP, FP, FN)``. Walking both lists in time order and pairing
    the earliest unmatched reference and estimate whenever they are within
    tolerance yields a maximum matching, since tolerance windows are equal
    width and both lists are sorted.
    """
    r = np.asarray(getattr(ref, "beat_samples", ref), dtype=np.int64)
    e = np.asarray(getattr(est, "beat_samples", est), dtype=np.int64)
    tol = tolerance_samples(fs, tol_ms)
    i = j = tp = 0
    while i < len(r) and j < len(e):
        d = e[j] - r[i]
        if abs(d) <= tol:
            tp += 1
            i += 1
            j += 1
        elif d < 0:
            j += 1
        else:
            i += 1
    return tp, len(e) - tp, len(r) - tp


@dataclass
class RecordScore:
    record_id: str
    TP: int
    FP: int
    FN: int
    Se: float = field(init=False)
    PPV: float = field(init=False)

    def __post_init__(self):
        # zero denominator: 100 when the record has neither beats nor
        # detections, otherwise 0
        empty = self.TP + self.FP + self.FN == 0
        self.Se = 100.0 * self.TP / (self.TP + self.FN) if self.TP + self.FN else (100.0 if empty else 0.0)
        self.PPV = 100.0 * self.TP / (self.TP + self.FP) if self.TP + self.FP else (100.0 if empty else 0.0)

    @property
    def peaks(self) -> int:
        return self.TP + self.FN

    @classmethod
    def from_table(cls, record_id: str, peaks: int, fp: int, fn: int) -> "RecordScore":
        """Build from a published per-record row (reference beats, FP, FN)."""
        return cls(record_id, peaks - fn, fp, fn)


def challenge_score(se_avg: float, ppv_avg: float, se_gross: float, ppv_gross: float) -> float:
    return (se_avg + ppv_avg + se_gross + ppv_gross) / 4.0


def gross_rates(tp: int, fp: int, fn: int) -> tuple[float, float]:
    pooled = RecordScore("gross", tp, fp, fn)
    return pooled.Se, pooled.PPV


@dataclass
class ScoreReport:
    records: list[RecordScore]
    Se_avg: float
    PPV_avg: float
    Se_gross: float
    PPV_gross: float
    score: float

    @property
    def N(self) -> int:
        return len(self.records)

    @property
    def totals(self) -> tuple[int, int, int]:
        return (
            sum(r.TP for r in self.records),
            sum(r.FP for r in self.records),
            sum(r.FN for r in self.records),
        )

    @classmethod
    def from_records(cls, records: Sequence[RecordScore]) -> "ScoreReport":
        records = list(records)
        if not records:
            raise EmptyInput("cannot score an empty list of records")
        se_avg = float(np.mean([r.Se for r in records]))
        ppv_avg = float(np.mean([r.PPV for r in records]))
        tp = sum(r.TP for r in records)
        fp = sum(r.FP for r in records)
        fn = sum(r.FN for r in records)
        se_g, ppv_g = gross_rates(tp, fp, fn)
        return cls(records, se_avg, ppv_avg, se_g, ppv_g, challenge_score(se_avg, ppv_avg, se_g, ppv_g))

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "N": self.N,
            "Se_avg": self.Se_avg,
            "PPV_avg": self.PPV_avg,
            "Se_gross": self.Se_gross,
            "PPV_gross": self.PPV_gross,
            "score": self.score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreReport":
        recs = [RecordScore(r["record_id"], r["TP"], r["FP"], r["FN"]) for r in d["records"]]
        return cls(recs, d["Se_avg"], d["PPV_avg"], d["Se_gross"], d["PPV_gross"], d["score"])

    def __eq__(self, other):
        if not isinstance(other, ScoreReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def score_records(pairs: Iterable[tuple[object, object]], fs: int = 250,
                  tol_ms: float = TOLERANCE_MS) -> ScoreReport:
    """Score ``(reference, estimate)`` pairs; either side may be an
    :class:`AnnotationSet`, a :class:`DetectionResult` or a plain index list."""
    records = []
    for n, (ref, est) in enumerate(pairs):
        rid = getattr(ref, "record_id", None) or getattr(est, "record_id", None) or str(n)
        tp, fp, fn = match_beats(ref, est, fs, tol_ms)
        records.append(RecordScore(rid, tp, fp, fn))
    return ScoreReport.from_records(records)


def render_report(report: ScoreReport, fmt: str = "tsv") -> str:
    """Per-record table plus summary, as ``tsv`` (2 d.p.) or ``json`` (full precision)."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt != "tsv":
        raise UnknownFormat(f"unknown report format {fmt!r}; use 'tsv' or 'json'")
    lines = ["\t".join(TSV_COLUMNS)]
    for r in report.records:
        lines.append(f"{r.record_id}\t{r.peaks}\t{r.FP}\t{r.FN}\t{r.Se:.2f}\t{r.PPV:.2f}")
    tp, fp, fn = report.totals
    lines.append(f"Gross\t{tp + fn}\t{fp}\t{fn}\t{report.Se_gross:.2f}\t{report.PPV_gross:.2f}")
    lines.append(f"Avg\t\t\t\t{report.Se_avg:.2f}\t{report.PPV_avg:.2f}")
    lines.append("")
    lines.append(f"# N\t{report.N}")
    lines.append(f"# Se_avg\t{report.Se_avg:.2f}")
    lines.append(f"# PPV_avg\t{report.PPV_avg:.2f}")
    lines.append(f"# Se_gross\t{report.Se_gross:.2f}")
    lines.append(f"# PPV_gross\t{report.PPV_gross:.2f}")
    lines.append(f"# score\t{report.score:.2f}")
    lines.append("# records with no reference beats or no detections score 100 if both are empty, else 0")
    return "\n".join(lines) + "\n"
