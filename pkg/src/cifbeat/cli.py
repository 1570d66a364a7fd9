"""Command line entry point: ``cifbeat <command> ...``.

Commands: synth, preprocess, dataset, train, detect, score, cv. All accept
``--config FILE`` (flat ``section.key = value`` text) and repeated
``--set key=value`` overrides; ``cifbeat defaults`` prints every key.

Records in a directory are the ``*.json`` headers; the annotations of record
``X`` are ``X.ann`` in the same (or the ``--annotations``) directory. An
annotation file without an ``fs`` comment is read at the record's original
sampling rate.

On failure a single JSON line ``{"error": ..., "message": ...}`` is written
to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import DEFAULTS, PipelineConfig, parse_int_list
from .cv import architecture_grid, grid_search, render_grid
from .dataset import build_training_set, load_training_set, save_training_set
from .detector import detect, trace_table
from .errors import BadHeader, CifError
from .model import load_model, save_model, train
from .preprocess import CanonicalRecord, preprocess_record
from .record_io import (
    AnnotationSet, load_annotations, load_record, read_fs_comment, write_annotations, write_record,
)
from .scorer import render_report, score_records
from .synth import corpus_configs, write_corpus

logger = logging.getLogger("cifbeat")


# --------------------------------------------------------------------------
# helpers


def _headers(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise BadHeader(f"{directory}: not a directory")
    return sorted(p for p in directory.glob("*.json") if not p.name.startswith("."))


def _atomic_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def load_canonical(header_path, cfg: PipelineConfig) -> tuple[CanonicalRecord, int]:
    """Load a record, preprocessing it unless its header marks it canonical.

    Returns the record and the sampling rate of the original recording.
    """
    header = json.loads(Path(header_path).read_text())
    try:
        rec = load_record(header_path)
    except CifError as exc:
        raise type(exc)(f"{header_path}: {exc}") from None
    if header.get("canonical"):
        lags = header.get("lag_applied", ())
        return CanonicalRecord.from_record(rec, lags), int(header.get("source_fs", rec.fs))
    return preprocess_record(rec, cfg.preprocess()), rec.fs


def _annotation_for(header_path: Path, ann_dir, record_id: str, source_fs: int) -> AnnotationSet | None:
    directory = Path(ann_dir) if ann_dir else header_path.parent
    path = directory / f"{record_id}.ann"
    if not path.exists():
        return None
    fs = read_fs_comment(path) or source_fs
    return load_annotations(path, fs, record_id)


def _load_pairs(records_dir, ann_dir, cfg) -> list[tuple[CanonicalRecord, AnnotationSet]]:
    pairs = []
    for hp in _headers(records_dir):
        rec, source_fs = load_canonical(hp, cfg)
        ann = _annotation_for(hp, ann_dir, rec.record_id, source_fs)
        if ann is None:
            logger.warning("%s: no annotations, skipped", rec.record_id)
            continue
        ann = ann.rescaled(rec.fs)
        ann.check_within(rec.n_samples)
        pairs.append((rec, ann))
    return pairs


# --------------------------------------------------------------------------
# commands


def cmd_synth(cfg: PipelineConfig, out_dir) -> list[Path]:
    base = cfg.synth()
    configs = corpus_configs(cfg["synth.n_records"], base, cfg["synth.seed"])
    headers = write_corpus(configs, out_dir, cfg["synth.format"])
    cfg.echo(out_dir)
    return headers


def _preprocess_one(args):
    hp, out_dir, cfg = args
    rec = load_record(hp)
    canon = preprocess_record(rec, cfg.preprocess())
    write_record(
        canon.as_record(), out_dir, "f32le",
        extra={"canonical": True, "source_fs": rec.fs, "lag_applied": list(canon.lag_applied)},
    )
    ann_path = Path(hp).parent / f"{rec.record_id}.ann"
    if ann_path.exists():
        ann = load_annotations(ann_path, read_fs_comment(ann_path) or rec.fs, rec.record_id)
        write_annotations(ann.rescaled(canon.fs), Path(out_dir) / ann_path.name)
    return rec.record_id


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def cmd_preprocess(in_dir, out_dir, cfg: PipelineConfig, jobs: int = 1) -> list[str]:
    items = [(hp, Path(out_dir), cfg) for hp in _headers(in_dir)]
    ids = _map(_preprocess_one, items, jobs)
    cfg.echo(out_dir)
    return ids


def cmd_dataset(records_dir, ann_dir, out_file, cfg: PipelineConfig):
    pairs = _load_pairs(records_dir, ann_dir, cfg)
    ts = build_training_set(
        pairs, seed=cfg["dataset.seed"], stride=cfg["dataset.stride"], augment=cfg["dataset.augment"],
    )
    save_training_set(ts, out_file)
    cfg.echo(Path(out_file).parent)
    return ts


def cmd_train(dataset_file, out_model, cfg: PipelineConfig):
    ts = load_training_set(dataset_file)
    arch = cfg.architecture(ts.n_channels, ts.snippet_len)
    log_lines = [f"# {arch.label()} snippets={len(ts)} n0={ts.n0} n1={ts.n1}", "epoch\tloss"]
    model = train(ts, arch, cfg.train(), progress=lambda e, l: log_lines.append(f"{e}\t{l!r}"))
    out_model = Path(out_model)
    save_model(model, out_model)
    _atomic_text(out_model.with_name(out_model.name + ".log"), "\n".join(log_lines) + "\n")
    cfg.echo(out_model.parent)
    return model


def _detect_one(args):
    hp, model_path, out_dir, cfg, emit_plot_data, plot = args
    model = load_model(model_path)
    rec, source_fs = load_canonical(hp, cfg)
    res = detect(rec, model, cfg["detect.threshold"], cfg["detect.min_gap"], cfg["detect.min_pulse"])
    out_dir = Path(out_dir)
    write_annotations(res.as_annotations(), out_dir / f"{rec.record_id}.ann")
    if emit_plot_data:
        cols, data = trace_table(rec, res)
        lines = [",".join(cols)] + [",".join(_num(v) for v in row) for row in data]
        _atomic_text(out_dir / f"{rec.record_id}.trace.csv", "\n".join(lines) + "\n")
    if plot:
        from .plotting import plot_detection

        ref = _annotation_for(Path(hp), None, rec.record_id, source_fs)
        plot_detection(rec, res, out_dir / f"{rec.record_id}.png",
                       None if ref is None else ref.rescaled(rec.fs))
    return rec.record_id, len(res.beat_samples)


def _num(v) -> str:
    if np.isnan(v):
        return ""
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def cmd_detect(records_dir, model_path, out_dir, cfg: PipelineConfig, jobs: int = 1,
               emit_plot_data: bool = False, plot: bool = False):
    items = [(hp, model_path, out_dir, cfg, emit_plot_data, plot) for hp in _headers(records_dir)]
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    out = _map(_detect_one, items, jobs)
    cfg.echo(out_dir)
    return out


def cmd_score(ref_dir, est_dir, cfg: PipelineConfig, fmt: str = "tsv", figures=None) -> str:
    fs = cfg["score.fs"]
    ref_files = sorted(Path(ref_dir).glob("*.ann"))
    if not ref_files:
        raise BadHeader(f"{ref_dir}: no .ann reference files")
    pairs = []
    for rp in ref_files:
        rid = rp.name[: -len(".ann")]
        ref = load_annotations(rp, read_fs_comment(rp) or fs, rid).rescaled(fs)
        ep = Path(est_dir) / rp.name
        if ep.exists():
            est = load_annotations(ep, read_fs_comment(ep) or fs, rid).rescaled(fs)
        else:
            logger.warning("%s: no detections file, scoring as empty", rid)
            est = AnnotationSet(rid, [], fs)
        pairs.append((ref, est))
    report = score_records(pairs, fs, cfg["score.tol_ms"])
    if figures:
        from .plotting import plot_score_report

        plot_score_report(report, Path(figures) / "score_report.png")
    return render_report(report, fmt)


def cmd_cv(records_dir, ann_dir, cfg: PipelineConfig, jobs: int = 1, figures=None) -> str:
    pairs = _load_pairs(records_dir, ann_dir, cfg)
    if not pairs:
        raise BadHeader(f"{records_dir}: no annotated records")
    k_channels = pairs[0][0].n_channels
    candidates = architecture_grid(
        k_channels, parse_int_list(cfg["cv.filters"]), parse_int_list(cfg["cv.filter_lens"]),
        parse_int_list(cfg["cv.hidden"]),
    )
    rows = grid_search(pairs, candidates, cfg["cv.k"], cfg.train(), cfg["cv.seed"],
                       cfg["dataset.stride"], jobs)
    if figures:
        from .plotting import plot_grid

        plot_grid(rows, Path(figures) / "cv_grid.png")
    return render_grid(rows)


# --------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cifbeat", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"cifbeat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic annotated corpus")
    p.add_argument("out_dir")
    p.add_argument("--n-records", type=int)
    _common(p)

    p = sub.add_parser("preprocess", help="write canonical 250 Hz records")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--jobs", type=int, default=1)
    _common(p)

    p = sub.add_parser("dataset", help="build a balanced, augmented training set")
    p.add_argument("records_dir")
    p.add_argument("out_file")
    p.add_argument("--annotations", help="directory of .ann files (default: records_dir)")
    _common(p)

    p = sub.add_parser("train", help="train a model on a training-set file")
    p.add_argument("dataset")
    p.add_argument("out_model")
    p.add_argument("--filters", type=int, help="number of conv filters (train.filters)")
    p.add_argument("--filter-len", type=int, help="filter length (train.filter_len)")
    p.add_argument("--hidden", type=int, help="hidden nodes, 0 for none (train.hidden)")
    _common(p)

    p = sub.add_parser("detect", help="detect beats in every record of a directory")
    p.add_argument("records_dir")
    p.add_argument("model")
    p.add_argument("out_dir")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-plot-data", action="store_true", help="write <id>.trace.csv pulse traces")
    p.add_argument("--plot", action="store_true", help="write <id>.png detection figures")
    _common(p)

    p = sub.add_parser("score", help="score detections against reference annotations")
    p.add_argument("ref_dir")
    p.add_argument("est_dir")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--figures", help="directory for report figures")
    _common(p)

    p = sub.add_parser("cv", help="cross-validated architecture grid search")
    p.add_argument("records_dir")
    p.add_argument("--annotations")
    p.add_argument("--k", type=int, help="folds (cv.k)")
    p.add_argument("--filters", help="comma list of filter counts (cv.filters)")
    p.add_argument("--filter-lens", help="comma list of filter lengths (cv.filter_lens)")
    p.add_argument("--hidden", help="comma list of hidden sizes (cv.hidden)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="write the table here instead of stdout")
    p.add_argument("--figures", help="directory for report figures")
    _common(p)

    p = sub.add_parser("defaults", help="print every config key with its default")
    return parser


_FLAG_KEYS = {
    "synth": {"n_records": "synth.n_records"},
    "train": {"filters": "train.filters", "filter_len": "train.filter_len", "hidden": "train.hidden"},
    "cv": {"k": "cv.k", "filters": "cv.filters", "filter_lens": "cv.filter_lens", "hidden": "cv.hidden"},
}


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config, args.set)
    for attr, key in _FLAG_KEYS.get(args.command, {}).items():
        value = getattr(args, attr, None)
        if value is not None:
            cfg.set(key, str(value))
    return cfg


def _emit(text: str, out) -> None:
    if out:
        _atomic_text(Path(out), text)
    else:
        sys.stdout.write(text)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "defaults":
        sys.stdout.write("".join(f"{k} = {v}\n" for k, v in sorted(DEFAULTS.items())))
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "synth":
            for hp in cmd_synth(cfg, args.out_dir):
                logger.info("wrote %s", hp)
        elif args.command == "preprocess":
            cmd_preprocess(args.in_dir, args.out_dir, cfg, args.jobs)
        elif args.command == "dataset":
            ts = cmd_dataset(args.records_dir, args.annotations, args.out_file, cfg)
            logger.info("%d snippets (n0=%d, n1=%d)", len(ts), ts.n0, ts.n1)
        elif args.command == "train":
            model = cmd_train(args.dataset, args.out_model, cfg)
            logger.info("final loss %.6f", model.final_loss)
        elif args.command == "detect":
            for rid, n in cmd_detect(args.records_dir, args.model, args.out_dir, cfg, args.jobs,
                                     args.emit_plot_data, args.plot):
                logger.info("%s: %d beats", rid, n)
        elif args.command == "score":
            text = cmd_score(args.ref_dir, args.est_dir, cfg, args.format, args.figures)
            _emit(text, args.out)
            if args.out:
                cfg.echo(Path(args.out).parent)
        elif args.command == "cv":
            text = cmd_cv(args.records_dir, args.annotations, cfg, args.jobs, args.figures)
            _emit(text, args.out)
            if args.out:
                cfg.echo(Path(args.out).parent)
    except (CifError, OSError, ValueError) as exc:
        line = {"error": type(exc).__name__, "command": args.command, "message": str(exc)}
        sys.stderr.write(json.dumps(line) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
