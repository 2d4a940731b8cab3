"""Random Ferns: random-split fixed-depth ferns, bagging and MAP voting.

A fern of depth D applies D (feature, threshold) tests and maps an object to
one of 2**D leaves; each leaf stores smoothed log class probabilities
estimated from the fern's bootstrap bag. The ensemble predicts the class with
the largest summed log probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset, Resample, member_seeds
from .forest import ImportanceVector

MAX_DEPTH = 16


@dataclass(frozen=True)
class FernsParams:
    depth: int = 5
    n_ferns: int = 1000
    smoothing: float = 1.0

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in 1..{MAX_DEPTH}, got {self.depth}")
        if self.n_ferns < 1:
            raise ValueError(f"n_ferns must be >= 1, got {self.n_ferns}")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")


@dataclass(frozen=True, eq=False)
class FernsModel:
    features: np.ndarray  # (n_ferns, D)
    thresholds: np.ndarray  # (n_ferns, D)
    log_probs: np.ndarray  # (n_ferns, 2**D, K)
    inbag: np.ndarray  # (n_ferns, N)
    n_features: int
    classes: np.ndarray

    @property
    def n_ferns(self) -> int:
        return self.features.shape[0]

    @property
    def depth(self) -> int:
        return self.features.shape[1]

    def bag(self, m: int) -> Resample:
        counts = self.inbag[m]
        return Resample(np.repeat(np.arange(len(counts)), counts), np.flatnonzero(counts == 0))


def fit_ferns_arrays(X, y, n_classes, params: FernsParams, rng, classes=None) -> FernsModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    seeds = member_seeds(rng, params.n_ferns)
    feats, thrs, logp, inbag = _kernels.fit_ferns(X, y, n_classes, seeds, params.depth,
                                                  float(params.smoothing))
    if classes is None:
        classes = np.arange(n_classes)
    return FernsModel(feats, thrs, logp, inbag, X.shape[1], np.asarray(classes))


def train_ferns(d: Dataset, p: FernsParams, rng: np.random.Generator) -> FernsModel:
    return fit_ferns_arrays(d.features, d.y, d.n_classes, p, rng, classes=d.classes)


def _check_width(m: FernsModel, rows) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != m.n_features:
        raise ValueError(f"expected rows of width {m.n_features}, got shape {rows.shape}")
    return rows


def ferns_class_scores(m: FernsModel, rows) -> np.ndarray:
    """Summed leaf log probabilities, shape (n_rows, K)."""
    return _kernels.ferns_scores(m.features, m.thresholds, m.log_probs, _check_width(m, rows))


def predict_ferns(m: FernsModel, rows) -> np.ndarray:
    return m.classes[np.argmax(ferns_class_scores(m, rows), axis=1)]


def ferns_oob_error(m: FernsModel, X, y) -> float:
    scores, n_votes = _kernels.ferns_oob_scores(m.features, m.thresholds, m.log_probs,
                                                m.inbag, _check_width(m, X))
    has = n_votes > 0
    if not has.any():
        return float("nan")
    return float(np.mean(np.argmax(scores[has], axis=1) != np.asarray(y)[has]))


def importance_from_arrays(m: FernsModel, X, y, rng, *, average: str = "using",
                           scale: str = "log", identity: bool = False) -> np.ndarray:
    if average not in ("using", "all"):
        raise ValueError(f"average must be 'using' or 'all', got {average!r}")
    if scale not in ("log", "linear"):
        raise ValueError(f"scale must be 'log' or 'linear', got {scale!r}")
    X = _check_width(m, X)
    seeds = member_seeds(rng, m.n_ferns)
    sums, uses = _kernels.ferns_importance_sums(
        m.features, m.thresholds, m.log_probs, m.inbag, X,
        np.ascontiguousarray(y, dtype=np.int64), seeds, bool(identity), scale == "linear")
    if average == "all":
        return sums / m.n_ferns
    out = np.zeros_like(sums)
    nz = uses > 0
    out[nz] = sums[nz] / uses[nz]
    return out


def ferns_importance(m: FernsModel, d: Dataset, rng: np.random.Generator, *,
                     average: str = "using", scale: str = "log",
                     identity: bool = False) -> ImportanceVector:
    """Mean OOB drop of the correct-class score when a feature is permuted.

    Each fern contributes once per distinct feature it tests. By default the
    score averages over the ferns that use the feature (``average="using"``)
    and compares log probabilities (``scale="log"``).
    """
    if d.n_features != m.n_features or d.n_objects != m.inbag.shape[1]:
        raise ValueError("dataset shape does not match the trained ferns")
    scores = importance_from_arrays(m, d.features, d.y, rng, average=average, scale=scale,
                                    identity=identity)
    return ImportanceVector(scores, f"ferns:{m.depth}:{m.n_ferns}:{average}:{scale}")
