"""Random Forest classifier with Gini and OOB permutation importances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .dataset import Dataset, Resample, member_seeds

MEASURES = ("gini", "raw", "normalized")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    mtry: Optional[int] = None  # None -> floor(sqrt(P))
    min_node: int = 1
    max_depth: Optional[int] = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_node < 1:
            raise ValueError(f"min_node must be >= 1, got {self.min_node}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")

    def resolve_mtry(self, p: int) -> int:
        mtry = max(1, math.isqrt(p)) if self.mtry is None else self.mtry
        if mtry > p:
            raise ValueError(f"mtry={mtry} exceeds the number of features P={p}")
        return mtry


@dataclass(frozen=True)
class ImportanceVector:
    scores: np.ndarray
    source: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("importance scores must be finite")

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Trained forest stored as flat per-tree node arrays.

    Internal nodes carry a split feature, threshold and the count-weighted
    Gini decrease of the split; leaves have ``feature == -1`` and a class
    code in ``value``. ``inbag[t, i]`` is how often row ``i`` was drawn for
    tree ``t``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gini_decrease: np.ndarray
    n_nodes: np.ndarray
    inbag: np.ndarray
    n_features: int
    classes: np.ndarray
    used: np.ndarray  # features that won at least one split anywhere

    @property
    def n_trees(self) -> int:
        return self.feature.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def bag(self, t: int) -> Resample:
        counts = self.inbag[t]
        train = np.repeat(np.arange(len(counts)), counts)
        return Resample(train, np.flatnonzero(counts == 0))

    def split_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])


def fit_forest_arrays(X, y, n_classes, params: ForestParams, rng, penalty: float = 1.0,
                      classes=None) -> ForestModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    p = X.shape[1]
    mtry = params.resolve_mtry(p)
    seeds = member_seeds(rng, params.n_trees)
    max_depth = -1 if params.max_depth is None else params.max_depth
    out = _kernels.fit_forest(X, y, n_classes, seeds, mtry, params.min_node, max_depth,
                              float(penalty))
    feat, thr, left, right, value, dec, n_nodes, inbag, used = out
    if classes is None:
        classes = np.arange(n_classes)
    return ForestModel(feat, thr, left, right, value, dec, n_nodes, inbag, p,
                       np.asarray(classes), used)


def train_forest(d: Dataset, p: ForestParams, rng: np.random.Generator) -> ForestModel:
    """Grow ``p.n_trees`` CART trees, each on its own bootstrap bag."""
    return fit_forest_arrays(d.features, d.y, d.n_classes, p, rng, classes=d.classes)


def _check_width(m: ForestModel, rows) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != m.n_features:
        raise ValueError(f"expected rows of width {m.n_features}, got shape {rows.shape}")
    return rows


def forest_vote_counts(m: ForestModel, rows, trees=None) -> np.ndarray:
    rows = _check_width(m, rows)
    mask = np.zeros(m.n_trees, np.bool_)
    if trees is None:
        mask[:] = True
    else:
        mask[np.asarray(trees, dtype=np.int64)] = True
    return _kernels.forest_votes(m.feature, m.threshold, m.left, m.right, m.value,
                                 m.n_classes, rows, mask)


def predict_codes(m: ForestModel, rows, trees=None) -> np.ndarray:
    # argmax returns the first maximum: ties go to the lowest class code
    return np.argmax(forest_vote_counts(m, rows, trees), axis=1)


def predict_forest(m: ForestModel, rows, trees=None) -> np.ndarray:
    """Plurality vote over trees, returned as class labels."""
    return m.classes[predict_codes(m, rows, trees)]


def oob_error(m: ForestModel, X, y) -> tuple[float, np.ndarray]:
    """Ensemble OOB error and the per-tree errors on each tree's own OOB rows.

    Rows that are in-bag for every tree are left out of the ensemble error.
    """
    X = _check_width(m, X)
    y = np.ascontiguousarray(y, dtype=np.int64)
    votes, tree_err = _kernels.oob_votes(m.feature, m.threshold, m.left, m.right, m.value,
                                         m.inbag, y, m.n_classes, X)
    has = votes.sum(axis=1) > 0
    if not has.any():
        return math.nan, tree_err
    pred = np.argmax(votes[has], axis=1)
    return float(np.mean(pred != y[has])), tree_err


def gini_importance(m: ForestModel) -> np.ndarray:
    mask = m.feature >= 0
    return np.bincount(m.feature[mask], weights=m.gini_decrease[mask],
                       minlength=m.n_features).astype(np.float64)


def permutation_diffs(m: ForestModel, X, y, rng, identity: bool = False) -> np.ndarray:
    """(n_trees, P) matrix of per-tree OOB accuracy drops."""
    X = _check_width(m, X)
    seeds = member_seeds(rng, m.n_trees)
    return _kernels.permutation_diffs(m.feature, m.threshold, m.left, m.right, m.value,
                                      m.n_nodes, m.inbag, X,
                                      np.ascontiguousarray(y, dtype=np.int64), seeds,
                                      bool(identity))


def importance_from_arrays(m: ForestModel, X, y, measure: str, rng,
                           identity: bool = False) -> np.ndarray:
    if measure == "gini":
        return gini_importance(m)
    if measure not in MEASURES:
        raise ValueError(f"unknown importance measure {measure!r}; expected one of {MEASURES}")
    diffs = permutation_diffs(m, X, y, rng, identity)
    raw = diffs.mean(axis=0)
    if measure == "raw":
        return raw
    sd = diffs.std(axis=0)
    out = np.zeros_like(raw)
    nz = sd > 0
    out[nz] = raw[nz] / sd[nz]
    return out


def forest_importance(m: ForestModel, d: Dataset, measure: str, rng: np.random.Generator,
                      identity: bool = False) -> ImportanceVector:
    """Gini, raw permutation or normalized permutation importance.

    ``identity=True`` replaces the OOB permutations with the identity, which
    is only useful for testing the bookkeeping.
    """
    if d.n_features != m.n_features or d.n_objects != m.inbag.shape[1]:
        raise ValueError("dataset shape does not match the trained forest")
    scores = importance_from_arrays(m, d.features, d.y, measure, rng, identity)
    return ImportanceVector(scores, f"forest:{measure}:{m.n_trees}")
