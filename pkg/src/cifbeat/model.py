"""Single-convolution-layer CNN that fuses K channels into one beat probability.

Each of the ``p`` filters has one length-``L`` component per channel. For a
``K x M`` window the ``j``-th filter output at position ``n`` is::

    y[j, n] = sum_k sum_l x[k, n - l] * h[k, j, l] + b[j],   n = L-1, ..., M-1

i.e. a valid (unpadded) convolution giving ``M - L + 1`` values per filter.
The ``p * (M - L + 1)`` outputs go through a sigmoid, then through an
optional sigmoid hidden layer, into a single sigmoid output unit trained with
binary cross-entropy.

Feature vectors are laid out filter-major: index ``j * (M - L + 1) + i``.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadMagic, DivergedLoss, ShapeMismatch, TruncatedPayload, VersionMismatch

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12
DECISION_THRESHOLD = 0.5


def sigmoid(z):
    # split by sign so large |z| never overflows exp
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class CifArchitecture:
    n_channels: int
    snippet_len: int = 251
    n_filters: int = 2
    filter_len: int = 20
    hidden_nodes: int = 0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ShapeMismatch("need at least one channel")
        if self.n_filters < 1:
            raise ShapeMismatch("need at least one filter")
        if not 1 <= self.filter_len <= self.snippet_len:
            raise ShapeMismatch(
                f"filter length {self.filter_len} outside [1, {self.snippet_len}]"
            )
        if self.hidden_nodes < 0:
            raise ShapeMismatch("hidden_nodes must be >= 0")

    @property
    def outputs_per_filter(self) -> int:
        return self.snippet_len - self.filter_len + 1

    @property
    def feature_len(self) -> int:
        return self.n_filters * self.outputs_per_filter

    def label(self) -> str:
        return f"p={self.n_filters} L={self.filter_len} hidden={self.hidden_nodes}"


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    init_scale: float = 0.1
    conv_bias: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


PARAM_NAMES = ("conv_weights", "conv_bias", "hidden_weights", "hidden_bias", "out_weights", "out_bias")


@dataclass(eq=False)
class CifModel:
    """Weights plus the architecture and training settings that produced them.

    Shapes: ``conv_weights (K, p, L)``, ``conv_bias (p,)``,
    ``hidden_weights (H, F)``, ``hidden_bias (H,)``, ``out_weights (H or F,)``,
    ``out_bias (1,)``. With no hidden layer the hidden arrays have ``H = 0``.
    """

    arch: CifArchitecture
    conv_weights: np.ndarray
    conv_bias: np.ndarray
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    out_weights: np.ndarray
    out_bias: np.ndarray
    conv_bias_enabled: bool = True
    seed: int = 0
    epochs: int = 0
    batch_size: int = 0
    learning_rate: float = 0.0
    init_scale: float = 0.0
    final_loss: float = float("nan")

    def __post_init__(self):
        a = self.arch
        h, f = a.hidden_nodes, a.feature_len
        expected = {
            "conv_weights": (a.n_channels, a.n_filters, a.filter_len),
            "conv_bias": (a.n_filters,),
            "hidden_weights": (h, f) if h else (0, f),
            "hidden_bias": (h,),
            "out_weights": (h if h else f,),
            "out_bias": (1,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @classmethod
    def initialize(cls, arch: CifArchitecture, seed: int = 0, init_scale: float = 0.1,
                   conv_bias: bool = True) -> "CifModel":
        """Weights uniform in ``[-init_scale, init_scale]``, biases zero."""
        rng = np.random.default_rng(seed)
        h, f = arch.hidden_nodes, arch.feature_len
        conv = rng.uniform(-init_scale, init_scale, (arch.n_channels, arch.n_filters, arch.filter_len))
        hidden = rng.uniform(-init_scale, init_scale, (h, f)) if h else np.zeros((0, f))
        out = rng.uniform(-init_scale, init_scale, h if h else f)
        return cls(
            arch, conv, np.zeros(arch.n_filters), hidden, np.zeros(h), out, np.zeros(1),
            conv_bias_enabled=conv_bias, seed=seed, init_scale=init_scale,
        )

    @classmethod
    def zeros(cls, arch: CifArchitecture) -> "CifModel":
        h, f = arch.hidden_nodes, arch.feature_len
        return cls(
            arch, np.zeros((arch.n_channels, arch.n_filters, arch.filter_len)),
            np.zeros(arch.n_filters), np.zeros((h, f) if h else (0, f)), np.zeros(h),
            np.zeros(h if h else f), np.zeros(1),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "CifModel":
        return replace(self, **{n: a.copy() for n, a in self.params().items()})

    def equals(self, other: "CifModel") -> bool:
        return self.arch == other.arch and all(
            np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values())
        )


# --------------------------------------------------------------------------
# Forward / backward on batches


def _check_batch(x: np.ndarray, arch: CifArchitecture) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (arch.n_channels, arch.snippet_len):
        raise ShapeMismatch(
            f"windows of shape {x.shape[-2:] if x.ndim >= 2 else x.shape} do not match "
            f"({arch.n_channels}, {arch.snippet_len})"
        )
    return x


def _conv_pre(x: np.ndarray, model: CifModel):
    """Pre-activation conv outputs ``(B, p, M-L+1)`` and the patch view used."""
    patches = sliding_window_view(x, model.arch.filter_len, axis=2)  # (B, K, Fn, L): x[b,k,i+m]
    flipped = model.conv_weights[:, :, ::-1]  # patch offset m pairs with tap L-1-m
    z = np.einsum("bkim,kjm->bji", patches, flipped, optimize=True)
    return z + model.conv_bias[None, :, None], patches


def _forward_cache(x: np.ndarray, model: CifModel) -> dict:
    z, patches = _conv_pre(x, model)
    a = sigmoid(z)
    feats = a.reshape(len(x), -1)
    cache = {"patches": patches, "a": a, "feats": feats}
    if model.arch.hidden_nodes:
        hid = sigmoid(feats @ model.hidden_weights.T + model.hidden_bias)
        cache["hid"] = hid
        logit = hid @ model.out_weights + model.out_bias[0]
    else:
        logit = feats @ model.out_weights + model.out_bias[0]
    cache["logit"] = logit
    cache["prob"] = sigmoid(logit)
    return cache


def conv_forward(window, model: CifModel) -> np.ndarray:
    """Sigmoid conv features of one ``(K, M)`` window, length ``p * (M - L + 1)``."""
    x = _check_batch(window, model.arch)
    return sigmoid(_conv_pre(x, model)[0]).reshape(len(x), -1)[0]


def forward_batch(windows, model: CifModel) -> np.ndarray:
    x = _check_batch(windows, model.arch)
    return _forward_cache(x, model)["prob"]


def forward(window, model: CifModel) -> float:
    """Beat probability for one window."""
    return float(forward_batch(window, model)[0])


def loss(prob, label):
    """Binary cross-entropy with the probability clamped to ``[eps, 1 - eps]``."""
    p = np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    return -(label * np.log(p) + (1 - label) * np.log(1.0 - p))


def batch_gradients(windows, labels, model: CifModel) -> tuple[dict[str, np.ndarray], float]:
    """Gradients of the summed loss over a batch, and that summed loss."""
    x = _check_batch(windows, model.arch)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if len(y) != len(x):
        raise ShapeMismatch(f"{len(x)} windows but {len(y)} labels")
    c = _forward_cache(x, model)
    prob = c["prob"]
    total = float(np.sum(loss(prob, y)))
    d_logit = prob - y  # (B,)

    grads: dict[str, np.ndarray] = {"out_bias": np.array([d_logit.sum()])}
    if model.arch.hidden_nodes:
        hid = c["hid"]
        grads["out_weights"] = hid.T @ d_logit
        d_hpre = np.outer(d_logit, model.out_weights) * hid * (1.0 - hid)
        grads["hidden_weights"] = d_hpre.T @ c["feats"]
        grads["hidden_bias"] = d_hpre.sum(axis=0)
        d_feats = d_hpre @ model.hidden_weights
    else:
        grads["out_weights"] = c["feats"].T @ d_logit
        grads["hidden_weights"] = np.zeros_like(model.hidden_weights)
        grads["hidden_bias"] = np.zeros_like(model.hidden_bias)
        d_feats = np.outer(d_logit, model.out_weights)

    a = c["a"]
    d_z = d_feats.reshape(a.shape) * a * (1.0 - a)  # (B, p, Fn)
    grads["conv_bias"] = d_z.sum(axis=(0, 2))
    g_flipped = np.einsum("bji,bkim->kjm", d_z, c["patches"], optimize=True)
    grads["conv_weights"] = np.ascontiguousarray(g_flipped[:, :, ::-1])
    return grads, total


def backward(window, label, model: CifModel) -> dict[str, np.ndarray]:
    """Exact gradient of the loss for one window, keyed like :meth:`CifModel.params`."""
    return batch_gradients(window, [label], model)[0]


# --------------------------------------------------------------------------
# Training


def train(training_set, arch: CifArchitecture, config: TrainConfig | None = None,
          progress: Callable[[int, float], None] | None = None) -> CifModel:
    """Mini-batch gradient descent on the mean cross-entropy.

    The shuffle order for every epoch comes from one generator seeded with
    ``config.seed``, so identical inputs give bit-identical weights. The mean
    loss of the last epoch is stored in ``model.final_loss``.
    """
    cfg = config or TrainConfig()
    windows = np.asarray(training_set.windows, dtype=np.float64)
    labels = np.asarray(training_set.labels, dtype=np.float64)
    if len(labels) == 0:
        raise ValueError("training set is empty")
    _check_batch(windows[:1], arch)

    model = CifModel.initialize(arch, cfg.seed, cfg.init_scale, cfg.conv_bias)
    model.epochs, model.batch_size, model.learning_rate = cfg.epochs, cfg.batch_size, cfg.learning_rate
    rng = np.random.default_rng(cfg.seed + 1)
    params = model.params()
    epoch_loss = float("nan")
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(labels))
        running = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            grads, batch_loss = batch_gradients(windows[idx], labels[idx], model)
            running += batch_loss
            if not np.isfinite(batch_loss):
                raise DivergedLoss(f"loss became {batch_loss} in epoch {epoch + 1}")
            step = cfg.learning_rate / len(idx)
            for name, g in grads.items():
                if name == "conv_bias" and not model.conv_bias_enabled:
                    continue
                params[name] -= step * g
        epoch_loss = running / len(labels)
        if not np.isfinite(epoch_loss):
            raise DivergedLoss(f"loss became {epoch_loss} in epoch {epoch + 1}")
        logger.info("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, epoch_loss)
        if progress is not None:
            progress(epoch + 1, epoch_loss)
    model.final_loss = epoch_loss
    return model


def accuracy(training_set, model: CifModel, threshold: float = DECISION_THRESHOLD) -> float:
    probs = np.concatenate([
        forward_batch(training_set.windows[s : s + 4096], model)
        for s in range(0, len(training_set.labels), 4096)
    ])
    return float(np.mean((probs >= threshold) == (np.asarray(training_set.labels) == 1)))


# --------------------------------------------------------------------------
# Whole-record inference


def window_logits(signals, model: CifModel, chunk: int = 8192) -> np.ndarray:
    """Output logits for every stride-1 window of a ``(K, N)`` signal.

    Entry ``s`` is the logit of window ``signals[:, s:s+M]``. Convolution is
    shift invariant, so the conv layer runs once over the whole record and
    each window reads a slice of it.
    """
    arch = model.arch
    x = np.asarray(signals, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != arch.n_channels:
        raise ShapeMismatch(f"signal shape {x.shape} does not match {arch.n_channels} channels")
    n, m, fn = x.shape[1], arch.snippet_len, arch.outputs_per_filter
    if n < m:
        return np.zeros(0)
    acts = np.empty((arch.n_filters, n - arch.filter_len + 1))
    for j in range(arch.n_filters):
        z = sum(np.convolve(x[k], model.conv_weights[k, j], mode="valid") for k in range(arch.n_channels))
        acts[j] = sigmoid(z + model.conv_bias[j])
    n_win = n - m + 1
    if not arch.hidden_nodes:
        w = model.out_weights.reshape(arch.n_filters, fn)
        logit = sum(np.correlate(acts[j], w[j], mode="valid") for j in range(arch.n_filters))
        return logit + model.out_bias[0]
    views = sliding_window_view(acts, fn, axis=1)  # (p, n_win, Fn)
    out = np.empty(n_win)
    for s in range(0, n_win, chunk):
        feats = views[:, s : s + chunk].transpose(1, 0, 2).reshape(-1, arch.feature_len)
        hid = sigmoid(feats @ model.hidden_weights.T + model.hidden_bias)
        out[s : s + chunk] = hid @ model.out_weights + model.out_bias[0]
    return out


def window_probabilities(signals, model: CifModel) -> np.ndarray:
    return sigmoid(window_logits(signals, model))


# --------------------------------------------------------------------------
# Serialisation

_MAGIC = b"CIF1"
_VERSION = 1
_HEAD = struct.Struct("<4sI5II qIIddd")


def _weight_arrays(model: CifModel) -> list[np.ndarray]:
    arrays = [model.conv_weights, model.conv_bias]
    if model.arch.hidden_nodes:
        arrays += [model.hidden_weights, model.hidden_bias]
    return arrays + [model.out_weights, model.out_bias]


def model_to_bytes(model: CifModel) -> bytes:
    a = model.arch
    head = _HEAD.pack(
        _MAGIC, _VERSION, a.n_channels, a.snippet_len, a.n_filters, a.filter_len, a.hidden_nodes,
        int(model.conv_bias_enabled), int(model.seed), int(model.epochs), int(model.batch_size),
        float(model.learning_rate), float(model.init_scale), float(model.final_loss),
    )
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in _weight_arrays(model))
    return head + body


def model_from_bytes(data: bytes, source: str = "<bytes>") -> CifModel:
    if len(data) < 4 or data[:4] != _MAGIC:
        raise BadMagic(f"{source}: not a CIF model file")
    if len(data) < _HEAD.size:
        raise TruncatedPayload(f"{source}: header truncated")
    (_, version, k, m, p, L, h, flags, seed, epochs, batch, lr, init_scale,
     final_loss) = _HEAD.unpack_from(data)
    if version != _VERSION:
        raise VersionMismatch(f"{source}: model version {version}, expected {_VERSION}")
    arch = CifArchitecture(k, m, p, L, h)
    shell = CifModel.zeros(arch)
    off = _HEAD.size
    arrays = []
    for template in _weight_arrays(shell):
        nbytes = 8 * template.size
        if len(data) < off + nbytes:
            raise TruncatedPayload(f"{source}: weights truncated")
        arrays.append(np.frombuffer(data, "<f8", template.size, off).reshape(template.shape).copy())
        off += nbytes
    if len(data) != off:
        raise TruncatedPayload(f"{source}: {len(data) - off} trailing bytes")
    if h:
        conv, cbias, hw, hb, ow, ob = arrays
    else:
        conv, cbias, ow, ob = arrays
        hw, hb = shell.hidden_weights, shell.hidden_bias
    return CifModel(
        arch, conv, cbias, hw, hb, ow, ob, bool(flags & 1), seed, epochs, batch, lr,
        init_scale, final_loss,
    )


def save_model(model: CifModel, path) -> Path:
    """Write ``CIF1`` + version, architecture, training settings, then float64 weights.

    Weight order: conv taps indexed (k, j, l), conv biases, then hidden
    weights (row-major) and biases when present, then output weights and bias.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(model_to_bytes(model))
    os.replace(tmp, path)
    return path


def load_model(path) -> CifModel:
    return model_from_bytes(Path(path).read_bytes(), str(path))
