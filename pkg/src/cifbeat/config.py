"""Flat ``section.key = value`` pipeline configuration.

Values are merged in order: built-in defaults, config file, ``--set``
overrides. Unknown keys are rejected, except ``preprocess.lag.<channel>_ms``
which accepts any channel name. The environment variable ``CIF_SEED``
overrides every ``*.seed`` key.
"""

from __future__ import annotations

import os
import re
from pathlib import Path
from typing import Iterable, Mapping

from .errors import BadConfig
from .preprocess import ECG_LIKE, PreprocessConfig
from .synth import ChannelSpec, SynthConfig
from .model import CifArchitecture, TrainConfig

DEFAULTS: dict[str, object] = {
    "preprocess.resample.target_fs": 250,
    "preprocess.baseline.channels": ",".join(ECG_LIKE),
    "preprocess.normalize.window": 500,
    "preprocess.profile": "challenge",
    "dataset.stride": 101,
    "dataset.augment": True,
    "dataset.seed": 0,
    "train.filters": 2,
    "train.filter_len": 20,
    "train.hidden": 0,
    "train.learning_rate": 0.05,
    "train.epochs": 30,
    "train.batch_size": 32,
    "train.seed": 0,
    "train.init_scale": 0.1,
    "train.conv_bias": True,
    "detect.threshold": 0.5,
    "detect.min_gap": 3,
    "detect.min_pulse": 50,
    "score.fs": 250,
    "score.tol_ms": 150.0,
    "synth.n_records": 20,
    "synth.duration_s": 300.0,
    "synth.fs": 360,
    "synth.rr_mean_ms": 800.0,
    "synth.rr_jitter_ms": 40.0,
    "synth.channels": "ECG:qrs_spike:0.1:1.0,BP:bp_pulse:2.0:40.0",
    "synth.dropout": "",
    "synth.bp_lag_ms": 200.0,
    "synth.seed": 0,
    "synth.format": "i16le",
    "cv.k": 10,
    "cv.seed": 0,
    "cv.filters": "1,2,3",
    "cv.filter_lens": "1,20,150,250",
    "cv.hidden": "0",
}

_LAG_KEY = re.compile(r"^preprocess\.lag\.(.+)_ms$")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, default):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise BadConfig(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None
    return text


class PipelineConfig:
    """Effective configuration; index it like a dict with full dotted keys."""

    def __init__(self, values: Mapping[str, object] | None = None):
        self.values: dict[str, object] = dict(DEFAULTS)
        if values:
            self.update(values)

    def update(self, values: Mapping[str, object]) -> None:
        for key, value in values.items():
            self.set(key, value)

    def set(self, key: str, value) -> None:
        key = key.strip()
        if _LAG_KEY.match(key):
            self.values[key] = _coerce(key, value, 0.0) if isinstance(value, str) else float(value)
            return
        if key not in DEFAULTS:
            raise BadConfig(f"unknown config key {key!r}")
        default = DEFAULTS[key]
        self.values[key] = _coerce(key, value, default) if isinstance(value, str) else value

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides: Iterable[str] = (), env: Mapping[str, str] | None = None
             ) -> "PipelineConfig":
        cfg = cls()
        if path:
            cfg.update(parse_config_text(Path(path).read_text(), str(path)))
        for item in overrides:
            if "=" not in item:
                raise BadConfig(f"override {item!r} is not key=value")
            k, v = item.split("=", 1)
            cfg.set(k, v)
        env = os.environ if env is None else env
        if env.get("CIF_SEED"):
            seed = _coerce("CIF_SEED", env["CIF_SEED"], 0)
            for key in list(cfg.values):
                if key.endswith(".seed"):
                    cfg.values[key] = seed
        return cfg

    def dump(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def echo(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "effective_config.txt"
        tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
        tmp.write_text(self.dump())
        os.replace(tmp, path)
        return path

    # -- typed views ---------------------------------------------------------

    def preprocess(self) -> PreprocessConfig:
        lags = {}
        for key, value in self.values.items():
            m = _LAG_KEY.match(key)
            if m:
                lags[m.group(1)] = float(value)
        chans = _split(self["preprocess.baseline.channels"])
        profile = self["preprocess.profile"]
        if profile not in ("challenge", "plain"):
            raise BadConfig("preprocess.profile must be 'challenge' or 'plain'")
        return PreprocessConfig(
            target_fs=self["preprocess.resample.target_fs"],
            baseline_channels=tuple(chans) if tuple(chans) != ECG_LIKE else ECG_LIKE,
            normalize_window=self["preprocess.normalize.window"],
            profile=profile,
            lags_ms=lags,
        )

    def train(self) -> TrainConfig:
        try:
            return TrainConfig(
                learning_rate=self["train.learning_rate"],
                epochs=self["train.epochs"],
                batch_size=self["train.batch_size"],
                seed=self["train.seed"],
                init_scale=self["train.init_scale"],
                conv_bias=self["train.conv_bias"],
            )
        except ValueError as exc:
            raise BadConfig(str(exc)) from None

    def architecture(self, n_channels: int, snippet_len: int = 251) -> CifArchitecture:
        return CifArchitecture(
            n_channels, snippet_len, self["train.filters"], self["train.filter_len"], self["train.hidden"]
        )

    def synth(self) -> SynthConfig:
        channels = []
        for item in _split(self["synth.channels"]):
            parts = item.split(":")
            if len(parts) < 2:
                raise BadConfig(f"synth.channels entry {item!r} needs name:template")
            noise = float(parts[2]) if len(parts) > 2 else 0.0
            amp = float(parts[3]) if len(parts) > 3 else (40.0 if parts[1] == "bp_pulse" else 1.0)
            channels.append(ChannelSpec(parts[0], parts[1], noise, amp))
        dropout = []
        for item in [s for s in str(self["synth.dropout"]).split(";") if s.strip()]:
            parts = item.split(":")
            if len(parts) != 3:
                raise BadConfig(f"synth.dropout entry {item!r} needs start:end:channel")
            ch = parts[2].strip()
            dropout.append((float(parts[0]), float(parts[1]), int(ch) if ch.isdigit() else ch))
        cfg = SynthConfig(
            duration_s=self["synth.duration_s"],
            fs=self["synth.fs"],
            rr_mean_ms=self["synth.rr_mean_ms"],
            rr_jitter_ms=self["synth.rr_jitter_ms"],
            channels=tuple(channels),
            dropout=tuple(dropout),
            bp_lag_ms=self["synth.bp_lag_ms"],
            seed=self["synth.seed"],
        )
        cfg.validate()
        return cfg


def _split(text) -> list[str]:
    return [s.strip() for s in str(text).split(",") if s.strip()]


def parse_int_list(text) -> list[int]:
    try:
        return [int(s) for s in _split(text)]
    except ValueError:
        raise BadConfig(f"expected comma-separated integers, got {text!r}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise BadConfig(f"{source}:{lineno}: expected 'key = value'")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out
