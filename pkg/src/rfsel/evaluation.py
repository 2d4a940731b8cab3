"""Bootstrap assessment protocol: selection stability, post-selection error, comparisons."""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import forest as _forest
from .dataset import Dataset, Resample, bootstrap_resample, substream
from .forest import ForestParams
from .selectors import (ImportanceSource, Selection, run_boruta, run_rface, run_rfe,
                        run_rrf)
from .stats import binomial_tail, holm_adjust, wilcoxon_signed_rank

log = logging.getLogger(__name__)

DEFAULT_REPLICATES = 30
SELECTORS = ("boruta", "rface", "rfe", "rrf", "all")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """A named selector with its importance source and parameters.

    ``selector="all"`` selects every feature; it is the full-set baseline.
    """

    name: str
    selector: str
    importance: Optional[ImportanceSource] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise ValueError(f"unknown selector {self.selector!r}; expected one of {SELECTORS}")
        if self.selector in ("boruta", "rface", "rfe") and self.importance is None:
            raise ValueError(f"{self.selector} needs an importance source")

    def run(self, d: Dataset, rng: np.random.Generator) -> Selection:
        kw = dict(self.params)
        if self.selector == "boruta":
            return run_boruta(d, self.importance, rng=rng, **kw)
        if self.selector == "rface":
            return run_rface(d, self.importance, rng=rng, **kw)
        if self.selector == "rfe":
            return run_rfe(d, self.importance, rng=rng, **kw)
        if self.selector == "rrf":
            fp = kw.pop("forest", None)
            if isinstance(fp, dict):
                fp = ForestParams(**fp)
            return run_rrf(d, p=fp, rng=rng, **kw)
        from .selectors import Decision
        return Selection(tuple([Decision.CONFIRMED] * d.n_features))


@dataclass
class SelectionMatrix:
    method: str
    selected: np.ndarray  # (B, P) bool
    resamples: list
    wall_clock: np.ndarray  # seconds per replicate
    total_time: float = 0.0
    iterations: Optional[np.ndarray] = None

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=bool)
        if self.selected.ndim != 2 or self.selected.shape[0] < 2:
            raise ValueError("selection matrix needs at least 2 replicate rows")
        if len(self.resamples) != self.selected.shape[0]:
            raise ValueError("one resample per replicate row is required")

    @property
    def n_replicates(self) -> int:
        return self.selected.shape[0]

    @property
    def n_features(self) -> int:
        return self.selected.shape[1]

    def sizes(self) -> np.ndarray:
        return self.selected.sum(axis=1)


def resample_fingerprint(resamples: Sequence[Resample]) -> str:
    h = hashlib.sha256()
    for rs in resamples:
        h.update(np.asarray(rs.train_indices, dtype=np.int64).tobytes())
        h.update(b"|")
    return h.hexdigest()[:16]


def replicate_resamples(n: int, B: int, master_seed: int) -> list:
    return [bootstrap_resample(n, substream(master_seed, "resample", r)) for r in range(B)]


def selection_rows(rs: Resample, duplicates: str) -> np.ndarray:
    if duplicates == "keep":
        return rs.train_indices
    if duplicates == "drop":
        return np.unique(rs.train_indices)
    raise ValueError(f"duplicates must be 'keep' or 'drop', got {duplicates!r}")


def run_replicate(d: Dataset, method: MethodSpec, rs: Resample, master_seed: int, r: int,
                  duplicates: str = "drop"):
    """Run one selector on replicate ``r``; returns (mask, seconds, iterations)."""
    t0 = time.perf_counter()
    sub = d.take(rows=selection_rows(rs, duplicates))
    sel = method.run(sub, substream(master_seed, "select", r))
    return sel.mask(), time.perf_counter() - t0, sel.iterations_used


def _replicate_task(args):
    d, method, rs, seed, r, duplicates = args
    try:
        return run_replicate(d, method, rs, seed, r, duplicates)
    except Exception as e:  # re-raised with the replicate index by the caller
        raise ExperimentError(f"{method.name}: replicate {r} failed: {e!r}") from e


def run_bootstrap_experiment(d: Dataset, method: MethodSpec, B: int = DEFAULT_REPLICATES,
                             master_seed: int = 0, workers: int = 1,
                             duplicates: str = "drop") -> SelectionMatrix:
    """Run ``method`` on B bootstrap resamples of ``d``.

    Resamples depend only on (master_seed, replicate), so every method sees
    the same replicate sets. ``duplicates="drop"`` hands the selector the
    distinct objects of each resample.
    """
    if B < 2:
        raise ValueError("need at least 2 replicates")
    resamples = replicate_resamples(d.n_objects, B, master_seed)
    tasks = [(d, method, rs, master_seed, r, duplicates) for r, rs in enumerate(resamples)]
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_replicate_task, tasks))
    else:
        out = [_replicate_task(t) for t in tasks]
    total = time.perf_counter() - t0
    masks = np.array([o[0] for o in out])
    return SelectionMatrix(method.name, masks, resamples, np.array([o[1] for o in out]), total,
                           np.array([o[2] for o in out]))


@dataclass
class ScsReport:
    scs_set: np.ndarray
    c: float
    f: float
    p_hat: float
    pvalues: np.ndarray

    @property
    def ratio(self) -> float:
        return self.c / self.f if self.f > 0 else 0.0


def scs_analysis(m: SelectionMatrix, alpha: float = 0.01) -> ScsReport:
    """Features selected significantly more often than a Binomial(B, p_hat) null allows.

    p_hat is the mean per-replicate fraction of selected features; the
    per-feature upper-tail p-values are Holm-corrected at ``alpha``.
    """
    sel = m.selected
    B, P = sel.shape
    p_hat = float(sel.sum(axis=1).mean() / P)
    if p_hat == 0.0:
        return ScsReport(np.array([], dtype=np.int64), 0.0, 0.0, 0.0, np.ones(P))
    counts = sel.sum(axis=0)
    pvals = np.array([binomial_tail(int(s), B, p_hat) for s in counts])
    scs = np.flatnonzero(holm_adjust(pvals, alpha))
    c = float(sel[:, scs].sum(axis=1).mean()) if len(scs) else 0.0
    f = float(sel.sum(axis=1).mean())
    return ScsReport(scs, c, f, p_hat, pvals)


@dataclass
class ErrorReport:
    method: str
    errors: np.ndarray  # per replicate; nan where the OOB set was empty
    fingerprint: str

    @property
    def mean_error(self) -> float:
        return float(np.nanmean(self.errors))


def _majority_code(y: np.ndarray, n_classes: int) -> int:
    return int(np.argmax(np.bincount(y, minlength=n_classes)))


def replicate_error(d: Dataset, rs: Resample, selected: np.ndarray,
                    validation_forest: ForestParams, master_seed: int, r: int) -> float:
    """OOB error of a forest trained on resample ``rs`` restricted to ``selected``.

    Returns nan when the resample has no out-of-bag objects. An empty
    selection predicts the training majority class.
    """
    oob = rs.oob_indices
    if len(oob) == 0:
        log.warning("replicate %d has no out-of-bag objects; skipped", r)
        return math.nan
    train = rs.train_indices
    feats = np.flatnonzero(selected)
    y_tr, y_te = d.y[train], d.y[oob]
    if len(feats) == 0:
        log.info("replicate %d selected nothing; using the majority class", r)
        return float(np.mean(y_te != _majority_code(y_tr, d.n_classes)))
    X = d.features[:, feats]
    params = validation_forest
    if params.mtry is not None and params.mtry > len(feats):
        params = ForestParams(params.n_trees, None, params.min_node, params.max_depth)
    model = _forest.fit_forest_arrays(X[train], y_tr, d.n_classes, params,
                                      substream(master_seed, "validate", r))
    return float(np.mean(_forest.predict_codes(model, X[oob]) != y_te))


def post_selection_errors(d: Dataset, m: SelectionMatrix, validation_forest: ForestParams,
                          master_seed: int) -> ErrorReport:
    """Train a forest on each resample restricted to its selection; score on its OOB objects."""
    errs = np.array([replicate_error(d, rs, m.selected[r], validation_forest, master_seed, r)
                     for r, rs in enumerate(m.resamples)])
    return ErrorReport(m.method, errs, resample_fingerprint(m.resamples))


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    mean_error: float
    p_value: float
    best: bool
    significantly_worse: bool

    @property
    def equivalent_to_best(self) -> bool:
        return not self.significantly_worse


def compare_methods(reports: Sequence[ErrorReport], alpha: float = 0.01) -> list:
    """Test every method against the lowest-mean-error one (one-sided, Holm across methods)."""
    if len(reports) < 2:
        raise ValueError("need at least two methods to compare")
    fps = {r.fingerprint for r in reports}
    lens = {len(r.errors) for r in reports}
    if len(fps) != 1 or len(lens) != 1:
        raise ValueError("error reports are not paired over identical replicate sets")
    E = np.array([r.errors for r in reports])
    ok = ~np.isnan(E).any(axis=0)
    E = E[:, ok]
    means = E.mean(axis=1)
    best_mean = means.min()
    best = np.flatnonzero(np.isclose(means, best_mean, rtol=0, atol=1e-12))
    ref = E[best[0]]
    pvals = np.ones(len(reports))
    others = [i for i in range(len(reports)) if i not in set(best)]
    for i in others:
        pvals[i] = wilcoxon_signed_rank(E[i], ref, side="greater")
    worse = np.zeros(len(reports), dtype=bool)
    if others:
        worse[others] = holm_adjust(pvals[others], alpha)
    return [ComparisonRow(r.method, float(means[i]), float(pvals[i]), bool(i in set(best)),
                          bool(worse[i])) for i, r in enumerate(reports)]


@dataclass
class ExperimentResult:
    method: str
    matrix: SelectionMatrix
    scs: ScsReport
    errors: Optional[ErrorReport] = None

    @property
    def mean_seconds(self) -> float:
        return float(self.matrix.wall_clock.mean())
