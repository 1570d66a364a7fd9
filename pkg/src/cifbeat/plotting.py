"""Figures written alongside report files.

Figures are built with :class:`matplotlib.figure.Figure` directly, so no
interactive backend is ever needed.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from .dataset import PULSE_HALF_WIDTH

PULSE_KWARGS = dict(color="0.85", linewidth=0)
BEAT_KWARGS = dict(color="tab:red", linestyle="none", marker="v", markersize=5)
REF_KWARGS = dict(color="black", linestyle="none", marker="|", markersize=12)
GRID_KWARGS = dict(linestyle="-", color="black", linewidth=0.5, alpha=0.3)


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.stem}.tmp{os.getpid()}{path.suffix}")
    fig.savefig(tmp, dpi=120, bbox_inches="tight")
    os.replace(tmp, path)
    return path


def plot_detection(record, result, path, reference=None, start_s: float = 0.0, span_s: float = 10.0) -> Path:
    """Signals, raw and cleaned pulse tracks, detected and reference beats.

    Reference location pulses are shaded in grey on every panel.
    """
    fs = record.fs
    a = max(0, int(start_s * fs))
    b = min(record.n_samples, a + int(span_s * fs))
    t = np.arange(a, b) / fs
    rows = record.n_channels + 2
    fig = Figure(figsize=(10, 1.4 * rows))
    axes = fig.subplots(rows, 1, sharex=True)
    ref = None if reference is None else np.asarray(getattr(reference, "beat_samples", reference))
    beats = np.asarray(result.beat_samples)
    beats = beats[(beats >= a) & (beats < b)]

    def shade(ax):
        if ref is None:
            return
        for r in ref[(ref >= a - PULSE_HALF_WIDTH) & (ref < b + PULSE_HALF_WIDTH)]:
            ax.axvspan((r - PULSE_HALF_WIDTH) / fs, (r + PULSE_HALF_WIDTH) / fs, **PULSE_KWARGS)

    for ax, name, sig in zip(axes, record.channel_names, record.signals):
        shade(ax)
        ax.plot(t, sig[a:b], linewidth=0.8)
        ax.set_ylabel(name)
        ax.set_ylim(-1.1, 1.1)
        if ref is not None:
            r = ref[(ref >= a) & (ref < b)]
            ax.plot(r / fs, np.full(len(r), 1.0), **REF_KWARGS)
        ax.plot(beats / fs, np.full(len(beats), 0.9), **BEAT_KWARGS)
    for ax, trace, label in ((axes[-2], result.raw, "raw"), (axes[-1], result.cleaned, "cleaned")):
        shade(ax)
        if trace is not None:
            ax.step(t, np.asarray(trace)[a:b], where="post", linewidth=0.8)
        ax.set_ylabel(label)
        ax.set_ylim(-0.1, 1.1)
    axes[-1].set_xlabel("time (s)")
    axes[0].set_title(f"{record.record_id}: {len(beats)} detected beats")
    return _save(fig, path)


def plot_score_report(report, path) -> Path:
    recs = report.records
    x = np.arange(len(recs))
    fig = Figure(figsize=(max(6, 0.35 * len(recs) + 2), 4))
    ax = fig.subplots()
    ax.bar(x - 0.2, [r.Se for r in recs], width=0.4, label="Se")
    ax.bar(x + 0.2, [r.PPV for r in recs], width=0.4, label="PPV")
    ax.set_xticks(x)
    ax.set_xticklabels([r.record_id for r in recs], rotation=90, fontsize=8)
    low = min([r.Se for r in recs] + [r.PPV for r in recs] + [95.0])
    ax.set_ylim(max(0.0, low - 2), 100.5)
    ax.set_ylabel("%")
    ax.grid(axis="y", **GRID_KWARGS)
    ax.legend(loc="lower right")
    ax.set_title(f"score {report.score:.2f}%  (Se_avg {report.Se_avg:.2f}, PPV_avg {report.PPV_avg:.2f}, "
                 f"Se_gross {report.Se_gross:.2f}, PPV_gross {report.PPV_gross:.2f})", fontsize=9)
    return _save(fig, path)


def plot_grid(rows: Sequence, path) -> Path:
    """Cross-validated score against filter length, one line per filter count."""
    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    groups: dict[tuple[int, int], list] = {}
    for r in rows:
        groups.setdefault((r.arch.n_filters, r.arch.hidden_nodes), []).append(r)
    for (p, h), members in sorted(groups.items()):
        members.sort(key=lambda r: r.arch.filter_len)
        label = f"{p} filter{'s' if p > 1 else ''}" + (f", {h} hidden" if h else "")
        ax.plot([m.arch.filter_len for m in members], [m.score for m in members], marker="o", label=label)
    ax.set_xlabel("filter length L")
    ax.set_ylabel("CV score (%)")
    ax.grid(**GRID_KWARGS)
    ax.legend()
    return _save(fig, path)
