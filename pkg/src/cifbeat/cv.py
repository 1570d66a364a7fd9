"""Record-level k-fold cross-validation and architecture grid search."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import TRAIN_STRIDE, build_training_set
from .detector import detect
from .errors import TooFewRecords
from .model import CifArchitecture, TrainConfig, train
from .preprocess import CanonicalRecord
from .record_io import AnnotationSet
from .scorer import score_records

logger = logging.getLogger(__name__)

Pair = tuple[CanonicalRecord, AnnotationSet]


def fold_assignments(n_records: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffle record indices with ``seed`` and deal them into ``k`` folds."""
    if k < 2:
        raise TooFewRecords("k-fold cross-validation needs k >= 2")
    if n_records < k:
        raise TooFewRecords(f"{n_records} records cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(n_records)
    return [np.sort(f) for f in np.array_split(order, k)]


def _run_fold(pairs: Sequence[Pair], test_idx, arch, config, seed, stride) -> float:
    test = set(int(i) for i in test_idx)
    train_pairs = [p for i, p in enumerate(pairs) if i not in test]
    ts = build_training_set(train_pairs, seed=seed, stride=stride)
    model = train(ts, arch, config)
    scored = []
    for i in sorted(test):
        record, ann = pairs[i]
        scored.append((ann.rescaled(record.fs), detect(record, model)))
    return score_records(scored).score


def cross_validate(pairs: Sequence[Pair], arch: CifArchitecture, k: int,
                   config: TrainConfig | None = None, seed: int = 0,
                   stride: int = TRAIN_STRIDE, jobs: int = 1) -> tuple[float, list[float]]:
    """Mean challenge score over ``k`` record-level folds, plus per-fold scores.

    Each fold trains on the other ``k - 1`` parts and runs full detection
    and scoring on its held-out records.
    """
    config = config or TrainConfig()
    folds = fold_assignments(len(pairs), k, seed)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futs = [pool.submit(_run_fold, pairs, f, arch, config, seed, stride) for f in folds]
            scores = [f.result() for f in futs]
    else:
        scores = [_run_fold(pairs, f, arch, config, seed, stride) for f in folds]
    for i, s in enumerate(scores):
        logger.info("%s fold %d/%d score %.2f", arch.label(), i + 1, k, s)
    return float(np.mean(scores)), scores


@dataclass(frozen=True)
class GridRow:
    arch: CifArchitecture
    score: float
    fold_scores: tuple[float, ...]


def architecture_grid(n_channels: int, filters: Sequence[int], lengths: Sequence[int],
                      hidden: Sequence[int] = (0,), snippet_len: int = 251) -> list[CifArchitecture]:
    return [
        CifArchitecture(n_channels, snippet_len, p, L, h)
        for p, L, h in itertools.product(filters, lengths, hidden)
    ]


def grid_search(pairs: Sequence[Pair], candidates: Sequence[CifArchitecture], k: int,
                config: TrainConfig | None = None, seed: int = 0,
                stride: int = TRAIN_STRIDE, jobs: int = 1) -> list[GridRow]:
    """Cross-validate every candidate; best first, ties to fewer filters then shorter filters."""
    if not candidates:
        raise ValueError("no candidate architectures given")
    rows = []
    for arch in candidates:
        mean, folds = cross_validate(pairs, arch, k, config, seed, stride, jobs)
        rows.append(GridRow(arch, mean, tuple(folds)))
    rows.sort(key=lambda r: (-r.score, r.arch.n_filters, r.arch.filter_len, r.arch.hidden_nodes))
    return rows


def render_grid(rows: Sequence[GridRow]) -> str:
    lines = ["rank\tfilters\tfilter_len\thidden\tscore\tfold_scores"]
    for i, r in enumerate(rows, start=1):
        folds = ",".join(f"{s:.2f}" for s in r.fold_scores)
        lines.append(
            f"{i}\t{r.arch.n_filters}\t{r.arch.filter_len}\t{r.arch.hidden_nodes}\t{r.score:.2f}\t{folds}"
        )
    return "\n".join(lines) + "\n"
