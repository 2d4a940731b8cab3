"""Dataset model, CSV ingestion, bootstrap resampling and shadow features."""

from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

MIN_SHADOWS = 5


class DatasetError(ValueError):
    """Raised when input data violates the dataset contract."""


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for a named position under a master seed.

    Keys may be ints or strings; strings are hashed with crc32 so the
    mapping is stable across processes and platforms.
    """
    key = tuple(k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def member_seeds(rng: np.random.Generator, n: int) -> np.ndarray:
    """Pre-assigned per-member seeds for ensemble kernels."""
    return rng.integers(0, 2**31 - 1, size=n, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix (rows = objects) with categorical labels.

    ``classes`` fixes the class ordering used for tie breaking; it defaults
    to the sorted distinct labels. ``y`` holds the integer class codes.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    classes: np.ndarray | None = None
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        if X.ndim != 2:
            raise DatasetError("features must be a 2-d array (objects x features)")
        n, p = X.shape
        if n < 2:
            raise DatasetError(f"need at least 2 objects, got {n}")
        if p < 1:
            raise DatasetError("need at least 1 feature")
        if not np.isfinite(X).all():
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"non-finite value at row {r}, column {c}")
        labels = np.asarray(self.labels)
        if labels.shape != (n,):
            raise DatasetError(f"expected {n} labels, got shape {labels.shape}")
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(p))
        if len(names) != p:
            raise DatasetError(f"expected {p} feature names, got {len(names)}")
        if len(set(names)) != p:
            dup = sorted({a for a in names if names.count(a) > 1})
            raise DatasetError(f"duplicate feature names: {dup[:5]}")
        classes = np.unique(labels) if self.classes is None else np.asarray(self.classes)
        y = np.searchsorted(classes, labels)
        y = np.minimum(y, len(classes) - 1)
        if not np.all(classes[y] == labels):
            raise DatasetError("labels contain values outside the declared classes")
        X.setflags(write=False)
        labels = labels.copy()
        labels.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "y", y)

    @property
    def n_objects(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def take(self, rows=None, columns=None) -> "Dataset":
        """Subset rows (duplicates allowed) and/or columns, keeping the class order."""
        X = self.features
        labels = self.labels
        names = self.feature_names
        if rows is not None:
            rows = np.asarray(rows, dtype=np.int64)
            X = X[rows]
            labels = labels[rows]
        if columns is not None:
            columns = np.asarray(columns, dtype=np.int64)
            X = X[:, columns]
            names = tuple(names[c] for c in columns)
        return Dataset(X, labels, names, classes=self.classes)


@dataclass(frozen=True)
class Resample:
    train_indices: np.ndarray
    oob_indices: np.ndarray

    @property
    def n(self) -> int:
        return len(self.train_indices)


def bootstrap_resample(n: int, rng) -> Resample:
    """Draw ``n`` row indices with replacement; the rest are out-of-bag."""
    if n < 2:
        raise ValueError(f"bootstrap needs n >= 2, got {n}")
    draws = np.asarray(rng.integers(0, n, size=n), dtype=np.int64)
    counts = np.bincount(draws, minlength=n)
    return Resample(np.sort(draws), np.flatnonzero(counts == 0))


@dataclass(frozen=True, eq=False)
class ShadowedDataset:
    base: Dataset
    shadow_columns: np.ndarray  # N x S
    shadow_origin: np.ndarray  # length S, source column of each shadow

    @property
    def n_shadows(self) -> int:
        return self.shadow_columns.shape[1]

    def combined(self) -> Dataset:
        """Real features followed by the shadows, as one dataset."""
        names = self.base.feature_names + tuple(
            f"shadow{j}_{self.base.feature_names[s]}" for j, s in enumerate(self.shadow_origin)
        )
        X = np.hstack([self.base.features, self.shadow_columns])
        return Dataset(X, self.base.labels, names, classes=self.base.classes)


def shadow_sources(p: int) -> np.ndarray:
    """Source column of each shadow: one per feature, round-robin up to the minimum."""
    return np.arange(max(p, MIN_SHADOWS)) % p


def make_shadows(X: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    origin = shadow_sources(X.shape[1])
    return rng.permuted(X[:, origin], axis=0), origin


def augment_with_shadows(d: Dataset, rng: np.random.Generator) -> ShadowedDataset:
    """Attach independently permuted copies of every feature."""
    shadows, origin = make_shadows(d.features, rng)
    shadows.setflags(write=False)
    return ShadowedDataset(d, shadows, origin)


def _sniff_label_index(header: Sequence[str], label_column) -> int:
    if isinstance(label_column, int):
        idx = label_column if label_column >= 0 else len(header) + label_column
        if not 0 <= idx < len(header):
            raise DatasetError(f"label column index {label_column} out of range")
        return idx
    if label_column not in header:
        raise DatasetError(f"label column {label_column!r} not found in header")
    return header.index(label_column)


def ingest_csv(path, label_column=-1, delimiter: str = ",") -> Dataset:
    """Read a CSV file with a header row; rows are objects.

    Every non-label cell must parse as a finite real with a decimal point.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        li = _sniff_label_index(header, label_column)
        names = [h for i, h in enumerate(header) if i != li]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            vals = []
            for j, cell in enumerate(row):
                if j == li:
                    continue
                cell = cell.strip()
                if cell == "":
                    raise DatasetError(f"{path}:{lineno}: missing value in column {header[j]!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: cannot parse {cell!r} in column {header[j]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DatasetError(
                        f"{path}:{lineno}: non-finite value {cell!r} in column {header[j]!r}"
                    )
                vals.append(v)
            rows.append(vals)
            labels.append(row[li].strip())
    if len(set(labels)) < 2:
        raise DatasetError(f"{path}: label column has a single class")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(X, np.array(labels), tuple(names))


def write_csv(d: Dataset, path, label_name: str = "class", delimiter: str = ",") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(d.feature_names) + [label_name])
        for row, lab in zip(d.features, d.labels):
            w.writerow([repr(float(v)) for v in row] + [lab])
