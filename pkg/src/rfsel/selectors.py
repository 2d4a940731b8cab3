"""Boruta, RF-ACE, RFE and RRF feature selection over pluggable importance sources."""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ferns as _ferns
from . import forest as _forest
from .dataset import Dataset, bootstrap_resample, make_shadows
from .ferns import FernsParams
from .forest import ForestParams
from .stats import DegenerateTestError, binomial_cdf, binomial_tail, holm_adjust, paired_t_test

log = logging.getLogger(__name__)


class Decision(str, enum.Enum):
    CONFIRMED = "Confirmed"
    REJECTED = "Rejected"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class ImportanceSource:
    """Where feature scores come from: a forest measure or ferns of a given depth.

    ``n_members`` is the ensemble size (trees or ferns).
    """

    kind: str = "forest"
    measure: str = "raw"
    depth: int = 5
    n_members: int = 500
    mtry: Optional[int] = None
    ferns_average: str = "using"
    ferns_scale: str = "log"

    def __post_init__(self):
        if self.kind == "forest":
            if self.measure not in _forest.MEASURES:
                raise ValueError(f"unknown forest measure {self.measure!r}")
            ForestParams(self.n_members, self.mtry)
        elif self.kind == "ferns":
            FernsParams(self.depth, self.n_members)
            if self.ferns_average not in ("using", "all"):
                raise ValueError("ferns_average must be 'using' or 'all'")
            if self.ferns_scale not in ("log", "linear"):
                raise ValueError("ferns_scale must be 'log' or 'linear'")
        else:
            raise ValueError(f"importance kind must be 'forest' or 'ferns', got {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "ferns":
            return f"Ferns {self.depth}"
        return {"gini": "RF Gini", "raw": "RF Raw", "normalized": "RF Norm."}[self.measure]

    def scores(self, X, y, n_classes: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "forest":
            m = _forest.fit_forest_arrays(X, y, n_classes, ForestParams(self.n_members, self.mtry),
                                          rng)
            return _forest.importance_from_arrays(m, X, y, self.measure, rng)
        m = _ferns.fit_ferns_arrays(X, y, n_classes, FernsParams(self.depth, self.n_members), rng)
        return _ferns.importance_from_arrays(m, X, y, rng, average=self.ferns_average,
                                             scale=self.ferns_scale)

    def score_dataset(self, d: Dataset, rng) -> np.ndarray:
        return self.scores(d.features, d.y, d.n_classes, rng)


@dataclass
class Selection:
    status: tuple
    wall_clock: float = 0.0
    iterations_used: int = 0
    info: dict = field(default_factory=dict)

    @property
    def selected(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.status) if s is Decision.CONFIRMED],
                        dtype=np.int64)

    @property
    def n_features(self) -> int:
        return len(self.status)

    def mask(self) -> np.ndarray:
        return np.array([s is Decision.CONFIRMED for s in self.status], dtype=bool)


def _correct(ps: np.ndarray, alpha: float, correction: str) -> np.ndarray:
    if correction == "holm":
        return holm_adjust(ps, alpha)
    if correction == "bonferroni":
        return ps <= alpha / max(len(ps), 1)
    if correction == "none":
        return ps <= alpha
    raise ValueError(f"unknown correction {correction!r}")


def min_confirm_hits(n: int, m: int, alpha: float) -> Optional[int]:
    """Fewest hits in ``n`` rounds that can confirm a feature among ``m`` tested ones."""
    for k in range(n + 1):
        if binomial_tail(k, n, 0.5) <= alpha / m:
            return k
    return None


def run_boruta(d: Dataset, src: ImportanceSource, alpha: float = 0.01, max_iter: int = 100,
               rng: Optional[np.random.Generator] = None, correction: str = "holm") -> Selection:
    """All-relevant selection by repeated comparison against the best shadow.

    Each round scores the non-rejected features together with freshly
    permuted shadows of them; an undecided feature scoring strictly above
    the best shadow earns a hit. Hit counts are tested against
    Binomial(rounds, 1/2) in both directions, with the chosen multiplicity
    correction over the undecided features of that round. Rejected features
    and their shadows leave the system.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    t0 = time.perf_counter()
    p = d.n_features
    status = np.full(p, 0, dtype=np.int8)  # 0 undecided, 1 confirmed, -1 rejected
    hits = np.zeros(p, dtype=np.int64)
    n = 0
    undecided_trace = []
    while n < max_iter and np.any(status == 0):
        n += 1
        present = np.flatnonzero(status >= 0)
        Xp = d.features[:, present]
        shadows, _ = make_shadows(Xp, rng)
        imp = src.scores(np.hstack([Xp, shadows]), d.y, d.n_classes, rng)
        k = len(present)
        best_shadow = imp[k:].max()
        hit = imp[:k] > best_shadow
        hits[present[hit & (status[present] == 0)]] += 1
        tested = np.flatnonzero(status == 0)
        h = hits[tested]
        p_hi = np.array([binomial_tail(int(x), n, 0.5) for x in h])
        p_lo = np.array([binomial_cdf(int(x), n, 0.5) for x in h])
        conf = _correct(p_hi, alpha, correction)
        rej = _correct(p_lo, alpha, correction) & ~conf
        status[tested[conf]] = 1
        status[tested[rej]] = -1
        undecided_trace.append(int(np.sum(status == 0)))
    decisions = tuple(Decision.CONFIRMED if s == 1 else Decision.REJECTED if s == -1
                      else Decision.UNDECIDED for s in status)
    return Selection(decisions, time.perf_counter() - t0, n,
                     {"hits": hits.tolist(), "undecided_trace": undecided_trace})


def run_rface(d: Dataset, src: ImportanceSource, n_iter: int = 20, alpha: float = 0.05,
              rng: Optional[np.random.Generator] = None) -> Selection:
    """Artificial-contrast selection: paired t-test of feature vs. mean shadow importance."""
    if n_iter < 2:
        raise ValueError("RF-ACE needs n_iter >= 2 for the t-test")
    rng = np.random.default_rng() if rng is None else rng
    t0 = time.perf_counter()
    p = d.n_features
    diffs = np.empty((n_iter, p))
    for it in range(n_iter):
        shadows, _ = make_shadows(d.features, rng)
        imp = src.scores(np.hstack([d.features, shadows]), d.y, d.n_classes, rng)
        diffs[it] = imp[:p] - imp[p:].mean()
    decisions = []
    n_degenerate = 0
    for f in range(p):
        try:
            ok = paired_t_test(diffs[:, f], "greater") < alpha
        except DegenerateTestError:
            n_degenerate += 1
            ok = bool(np.all(diffs[:, f] > 0))
        decisions.append(Decision.CONFIRMED if ok else Decision.REJECTED)
    if n_degenerate:
        log.info("rf-ace: %d features had zero-variance differences", n_degenerate)
    return Selection(tuple(decisions), time.perf_counter() - t0, n_iter,
                     {"degenerate": n_degenerate})


def rfe_schedule(p: int) -> list[int]:
    """Subset sizes visited: p, then the largest power of 2 below the current size, down to 4."""
    if p < 4:
        raise ValueError(f"RFE needs at least 4 features, got {p}")
    sizes = [p]
    while sizes[-1] > 4:
        sizes.append(1 << ((sizes[-1] - 1).bit_length() - 1))
    return sizes


def _assess(X, y, n_classes, resamples, n_trees, rng) -> float:
    errs = []
    for rs in resamples:
        if len(rs.oob_indices) == 0:
            continue
        m = _forest.fit_forest_arrays(X[rs.train_indices], y[rs.train_indices], n_classes,
                                      ForestParams(n_trees), rng)
        pred = _forest.predict_codes(m, X[rs.oob_indices])
        errs.append(np.mean(pred != y[rs.oob_indices]))
    return float(np.mean(errs)) if errs else math.nan


def run_rfe(d: Dataset, src: ImportanceSource, assess_trees: int = 500, assess_boots: int = 10,
            rng: Optional[np.random.Generator] = None) -> Selection:
    """Recursive elimination on a power-of-2 schedule, keeping the lowest-error subset.

    Every subset is assessed by bootstrap validation of a forest on the same
    ``assess_boots`` resamples; ties prefer the smaller subset.
    """
    rng = np.random.default_rng() if rng is None else rng
    t0 = time.perf_counter()
    sizes = rfe_schedule(d.n_features)
    X, y, K = d.features, d.y, d.n_classes
    resamples = [bootstrap_resample(d.n_objects, rng) for _ in range(assess_boots)]
    current = np.arange(d.n_features)
    rounds = []
    for i, size in enumerate(sizes):
        if i > 0:
            imp = src.scores(X[:, current], y, K, rng)
            keep = np.argsort(-imp, kind="stable")[:size]
            current = np.sort(current[keep])
        err = _assess(X[:, current], y, K, resamples, assess_trees, rng)
        rounds.append((size, current, err))
    best = min(range(len(rounds)), key=lambda r: (rounds[r][2], rounds[r][0]))
    chosen = set(rounds[best][1].tolist())
    decisions = tuple(Decision.CONFIRMED if f in chosen else Decision.REJECTED
                      for f in range(d.n_features))
    return Selection(decisions, time.perf_counter() - t0, len(rounds),
                     {"sizes": sizes, "errors": [r[2] for r in rounds],
                      "chosen_size": rounds[best][0]})


def run_rrf(d: Dataset, lam: float = 0.8, p: Optional[ForestParams] = None,
            rng: Optional[np.random.Generator] = None) -> Selection:
    """Regularised forest: features new to the ensemble have their gain scaled by ``lam``.

    The selection is the set of features used by any split in the forest.
    With ``p=None`` every split considers all features.
    """
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lambda must be in (0, 1], got {lam}")
    rng = np.random.default_rng() if rng is None else rng
    p = ForestParams(mtry=d.n_features) if p is None else p
    t0 = time.perf_counter()
    m = _forest.fit_forest_arrays(d.features, d.y, d.n_classes, p, rng, penalty=lam)
    decisions = tuple(Decision.CONFIRMED if u else Decision.REJECTED for u in m.used)
    return Selection(decisions, time.perf_counter() - t0, p.n_trees, {"lambda": lam})
