"""Desk-scale proposal classifier.

A deterministic feature extractor (area-averaged 32x32 resample plus an
8-bin gradient-orientation histogram, D = 1032) feeds a multinomial
logistic regression trained by stochastic gradient descent with momentum.
The predict surface is the extension point where a heavier CNN adapter
could be plugged in later.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    FeatureError,
    FormatVersionError,
    TrainingDataError,
)
from .image import GrayImage
from .proposals import Proposal

RESIZE = 32
HIST_BINS = 8
FEATURE_DIM = RESIZE * RESIZE + HIST_BINS

PROB_CLAMP = 1e-12

_MAGIC = b"CSTM"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str


@dataclass(frozen=True)
class LabelSet:
    labels: tuple  # ClassLabel, ids contiguous from 0, names unique

    def __post_init__(self):
        ids = [l.id for l in self.labels]
        names = [l.name for l in self.labels]
        if ids != list(range(len(ids))):
            raise DomainError("label ids must be contiguous from 0")
        if len(set(names)) != len(names):
            raise DomainError("label names must be unique")

    @property
    def names(self) -> list:
        return [l.name for l in self.labels]

    def id_of(self, name: str) -> int:
        for l in self.labels:
            if l.name == name:
                return l.id
        raise DomainError("unknown label %r" % name)

    def __len__(self):
        return len(self.labels)


def make_labels(names) -> LabelSet:
    return LabelSet(tuple(ClassLabel(i, n) for i, n in enumerate(names)))


@dataclass
class ClassifierModel:
    weights: np.ndarray  # (D, n_classes)
    biases: np.ndarray   # (n_classes,)
    labels: LabelSet
    feature_dim: int = FEATURE_DIM


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 1
    lr_decay: float = 0.5
    decay_period: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise DomainError("learning rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise DomainError("momentum must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.decay_period < 1:
            raise DomainError("bad training counts")


def _resample_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix mapping n_in samples to n_out area averages."""
    scale = n_in / n_out
    idx = np.arange(n_in)
    lo = np.arange(n_out)[:, None] * scale
    hi = lo + scale
    overlap = np.minimum(hi, idx + 1.0) - np.maximum(lo, idx)
    return np.clip(overlap, 0.0, None) / scale


def area_resize(values: np.ndarray, out_rows: int = RESIZE, out_cols: int = RESIZE) -> np.ndarray:
    """Exact area-average resample (handles up- and downsampling)."""
    v = np.asarray(values, dtype=np.float64)
    wr = _resample_weights(v.shape[0], out_rows)
    wc = _resample_weights(v.shape[1], out_cols)
    return wr @ v @ wc.T


def extract_features(proposal: Proposal | GrayImage) -> np.ndarray:
    """Deterministic feature vector of a proposal crop.

    32x32 area-averaged resample scaled to [0, 1], concatenated with a
    magnitude-weighted 8-bin gradient-orientation histogram of the
    resampled patch (normalized to sum 1 when any gradient exists).
    """
    crop = proposal.crop if isinstance(proposal, Proposal) else proposal
    if crop.rows < 4 or crop.cols < 4:
        raise FeatureError("crop smaller than 4x4")
    x = area_resize(crop.as_float()) / (crop.max_level - 1)
    gu, gv = np.gradient(x)
    mag = np.hypot(gu, gv)
    ang = np.arctan2(gv, gu)  # [-pi, pi]
    bins = np.minimum(((ang + np.pi) / (2.0 * np.pi) * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=HIST_BINS)
    total = hist.sum()
    if total > 0:
        hist = hist / total
    return np.concatenate([x.ravel(), hist])


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Summed negative log-likelihood over samples and classes.

    Rows of `predicted` must be probability vectors (sum 1 within 1e-6);
    probabilities are clamped at 1e-12 before the log.
    """
    p = np.atleast_2d(np.asarray(predicted, dtype=np.float64))
    y = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if p.shape != y.shape:
        raise DomainError("prediction and truth shapes differ")
    if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-6) or np.any(p < 0):
        raise DomainError("rows must be probability vectors")
    return float(-(y * np.log(np.maximum(p, PROB_CLAMP))).sum())


def loss_gradient(weights: np.ndarray, biases: np.ndarray, x: np.ndarray, y_onehot: np.ndarray):
    """Cross-entropy loss over a batch and its analytic gradient.

    Returns (loss, dW, db) for the affine-softmax model; x is (B, D),
    y_onehot is (B, n_classes).
    """
    probs = softmax(x @ weights + biases)
    loss = cross_entropy(probs, y_onehot)
    g = probs - y_onehot
    return loss, x.T @ g, g.sum(axis=0)


def train(samples, config: TrainingConfig | None = None, labels: LabelSet | None = None) -> ClassifierModel:
    """Multinomial logistic regression via SGDM.

    `samples` is a sequence of (feature_vector, class_id) pairs; every
    class in the label set must appear at least once.  Sample order is
    reshuffled each epoch from config.seed; the learning rate is scaled by
    lr_decay every decay_period epochs.  Weights start at zero (convex
    objective, no symmetry breaking needed).
    """
    if config is None:
        config = TrainingConfig()
    xs = np.asarray([np.asarray(f, dtype=np.float64) for f, _ in samples])
    ys = np.asarray([int(c) for _, c in samples], dtype=np.int64)
    if xs.ndim != 2 or len(xs) == 0:
        raise TrainingDataError("no samples")
    n_classes = len(labels) if labels is not None else int(ys.max()) + 1
    present = np.bincount(ys, minlength=n_classes)
    if np.any(present == 0):
        missing = [i for i, c in enumerate(present) if c == 0]
        raise TrainingDataError("classes with no samples: %s" % missing)
    dim = xs.shape[1]
    if labels is None:
        labels = make_labels([str(i) for i in range(n_classes)])
    w = np.zeros((dim, n_classes))
    b = np.zeros(n_classes)
    vw = np.zeros_like(w)
    vb = np.zeros_like(b)
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for epoch in range(config.epochs):
        if epoch > 0 and epoch % config.decay_period == 0:
            lr *= config.lr_decay
        order = rng.permutation(len(xs))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_x = xs[idx]
            onehot = np.zeros((len(idx), n_classes))
            onehot[np.arange(len(idx)), ys[idx]] = 1.0
            _, gw, gb = loss_gradient(w, b, batch_x, onehot)
            gw /= len(idx)
            gb /= len(idx)
            vw = config.momentum * vw - lr * gw
            vb = config.momentum * vb - lr * gb
            w += vw
            b += vb
    return ClassifierModel(w, b, labels, dim)


def predict(model: ClassifierModel, proposal: Proposal | GrayImage | np.ndarray):
    """(label, probability vector) for a proposal; argmax ties go to the
    lowest class id."""
    if isinstance(proposal, np.ndarray):
        feats = proposal
    else:
        feats = extract_features(proposal)
    if feats.shape[0] != model.feature_dim:
        raise FormatVersionError("feature dimension mismatch")
    probs = softmax(feats @ model.weights + model.biases)
    idx = int(np.argmax(probs))  # first maximum = lowest id
    return model.labels.labels[idx], probs


def balance_training_set(items, seed: int = 0):
    """Subsample "normal"-labeled items so their count matches the total of
    all other labels (when normals are in excess); non-normal items are
    never dropped.  `items` is a sequence of (payload, label_name) pairs.
    """
    normal = [it for it in items if it[1] == "normal"]
    suspicious = [it for it in items if it[1] != "normal"]
    target = len(suspicious)
    if len(normal) <= target:
        return list(items)
    rng = np.random.default_rng(seed)
    keep = rng.choice(len(normal), size=target, replace=False)
    kept = [normal[i] for i in sorted(keep)]
    return suspicious + kept


def save_model(model: ClassifierModel, path) -> None:
    """Versioned binary serialization.

    Layout (little endian): magic "CSTM", format version u16, D u32,
    class count u32, then per label a u16 length + UTF-8 name, then the
    D x n weight matrix row-major as f64, then n biases as f64.
    """
    n = len(model.labels)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HII", _FORMAT_VERSION, model.feature_dim, n))
        for name in model.labels.names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.biases, dtype="<f8").tobytes())


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatVersionError("bad magic %r" % magic)
        version, dim, n = struct.unpack("<HII", fh.read(10))
        if version != _FORMAT_VERSION:
            raise FormatVersionError("unsupported format version %d" % version)
        names = []
        for _ in range(n):
            (ln,) = struct.unpack("<H", fh.read(2))
            names.append(fh.read(ln).decode("utf-8"))
        w = np.frombuffer(fh.read(dim * n * 8), dtype="<f8").reshape(dim, n).copy()
        b = np.frombuffer(fh.read(n * 8), dtype="<f8").copy()
        rest = fh.read()
        if len(rest):
            raise FormatVersionError("trailing bytes in model file")
    return ClassifierModel(w, b, make_labels(names), dim)
