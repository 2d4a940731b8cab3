"""Synthetic p >> n datasets with a known relevant/redundant/noise split."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from .dataset import Dataset

log = logging.getLogger(__name__)

SIGNALS = ("linear-threshold", "xor-pairs")


@dataclass(frozen=True)
class SyntheticSpec:
    n_objects: int = 60
    n_relevant: int = 5
    n_redundant: int = 0
    n_noise: int = 100
    k_classes: int = 2
    signal: Optional[str] = "linear-threshold"
    sigma: float = 0.5
    seed: int = 0
    shuffle_columns: bool = True

    def __post_init__(self):
        for name in ("n_objects", "n_relevant", "n_redundant", "n_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_features == 0:
            raise ValueError("synthetic spec has zero features")
        if self.n_objects < 2:
            raise ValueError("need at least 2 objects")
        if self.signal is not None:
            if self.signal not in SIGNALS:
                raise ValueError(f"unknown signal model {self.signal!r}; expected {SIGNALS}")
            if self.n_relevant < 1:
                raise ValueError("a signal model needs at least one relevant feature")
            if self.signal == "xor-pairs":
                if self.n_relevant % 2:
                    raise ValueError("xor-pairs needs an even number of relevant features")
                if self.k_classes != 2:
                    raise ValueError("xor-pairs produces exactly 2 classes")
        if self.n_redundant and not self.n_relevant:
            raise ValueError("redundant features need relevant sources")
        if self.k_classes < 2:
            raise ValueError("k_classes must be >= 2")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def n_features(self) -> int:
        return self.n_relevant + self.n_redundant + self.n_noise


@dataclass(frozen=True)
class GroundTruth:
    relevant: frozenset
    redundant: frozenset
    noise: frozenset

    @property
    def all_relevant(self) -> frozenset:
        return self.relevant | self.redundant

    def to_dict(self) -> dict:
        return {k: sorted(int(i) for i in getattr(self, k))
                for k in ("relevant", "redundant", "noise")}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(frozenset(d["relevant"]), frozenset(d["redundant"]), frozenset(d["noise"]))


def _labels(R: np.ndarray, spec: SyntheticSpec, rng) -> np.ndarray:
    if spec.signal is None:
        return rng.integers(0, spec.k_classes, size=spec.n_objects)
    if spec.signal == "linear-threshold":
        score = R.sum(axis=1)
        # class cuts at the theoretical quantiles of the N(0, n_relevant) score
        sd = np.sqrt(R.shape[1])
        cuts = [NormalDist(0.0, sd).inv_cdf(q / spec.k_classes) for q in range(1, spec.k_classes)]
        return np.searchsorted(np.array(cuts), score)
    bits = (R[:, 0::2] > 0) ^ (R[:, 1::2] > 0)
    n_pairs = bits.shape[1]
    return (2 * bits.sum(axis=1) >= n_pairs).astype(np.int64)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, GroundTruth]:
    """Draw a dataset; relevant, redundant and noise columns are interleaved at random."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n_objects
    R = rng.standard_normal((n, spec.n_relevant))
    y = _labels(R, spec, rng)
    src = np.arange(spec.n_redundant) % max(spec.n_relevant, 1)
    D = R[:, src] + spec.sigma * rng.standard_normal((n, spec.n_redundant))
    Z = rng.standard_normal((n, spec.n_noise))
    X = np.hstack([R, D, Z])
    p = X.shape[1]
    pos = rng.permutation(p) if spec.shuffle_columns else np.arange(p)
    out = np.empty_like(X)
    out[:, pos] = X
    a, b = spec.n_relevant, spec.n_relevant + spec.n_redundant
    truth = GroundTruth(frozenset(pos[:a].tolist()), frozenset(pos[a:b].tolist()),
                        frozenset(pos[b:].tolist()))
    if spec.n_redundant and spec.sigma <= 1.0:
        r = [abs(np.corrcoef(D[:, j], R[:, src[j]])[0, 1]) for j in range(spec.n_redundant)]
        if min(r) <= 0.5:
            log.warning("redundant column correlation fell to %.3f", min(r))
    names = tuple(f"x{i:0{len(str(p - 1))}d}" for i in range(p))
    return Dataset(out, y, names, classes=np.arange(spec.k_classes)), truth


@dataclass(frozen=True)
class TruthScore:
    precision: float
    recall: float
    noise_hits: int
    recall_minimal: float  # recall against the relevant block only


def score_against_truth(selected, truth: GroundTruth) -> TruthScore:
    """Precision/recall with relevant and redundant features both counted as true."""
    if hasattr(selected, "selected"):
        selected = selected.selected
    sel = {int(i) for i in selected}
    true = truth.all_relevant
    tp = len(sel & true)
    if not sel:
        log.info("empty selection scored with precision 1")
        precision = 1.0
    else:
        precision = tp / len(sel)
    recall = tp / len(true) if true else 1.0
    rec_min = len(sel & truth.relevant) / len(truth.relevant) if truth.relevant else 1.0
    return TruthScore(precision, recall, len(sel & truth.noise), rec_min)
