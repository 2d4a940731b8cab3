"""Exact and rank-based tests used by the selectors and the evaluation protocol."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

EXACT_WILCOXON_MAX = 25


class DegenerateTestError(ValueError):
    """A test statistic is undefined for the given sample (e.g. zero variance)."""


@dataclass(frozen=True)
class PValueSet:
    pvalues: tuple[float, ...]
    labels: tuple = ()

    def __post_init__(self):
        ps = tuple(float(p) for p in self.pvalues)
        labels = tuple(self.labels) or tuple(range(len(ps)))
        if len(labels) != len(ps):
            raise ValueError("pvalues and labels differ in length")
        if any(not 0.0 <= p <= 1.0 for p in ps):
            raise ValueError("p-values must lie in [0, 1]")
        object.__setattr__(self, "pvalues", ps)
        object.__setattr__(self, "labels", labels)


def _log_binom_pmf(j: int, n: int, log_p: float, log_q: float) -> float:
    return (math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
            + j * log_p + (n - j) * log_q)


def binomial_tail(k: int, n: int, p: float) -> float:
    """P(X >= k) for X ~ Binomial(n, p), summed in the log domain."""
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if k == 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    log_p, log_q = math.log(p), math.log1p(-p)
    terms = [_log_binom_pmf(j, n, log_p, log_q) for j in range(k, n + 1)]
    top = max(terms)
    total = math.exp(top) * math.fsum(math.exp(t - top) for t in terms)
    return min(1.0, total)


def binomial_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k), via the upper tail of the mirrored variable."""
    return binomial_tail(n - k, n, 1.0 - p)


def holm_adjust(ps, alpha: float) -> np.ndarray:
    """Holm step-down rejection mask, in input order."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if isinstance(ps, PValueSet):
        ps = ps.pvalues
    ps = np.asarray(ps, dtype=np.float64)
    m = len(ps)
    reject = np.zeros(m, dtype=bool)
    order = np.argsort(ps, kind="stable")
    for i, j in enumerate(order):
        if ps[j] <= alpha / (m - i):
            reject[j] = True
        else:
            break
    return reject


def signed_ranks(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks of |x - y| over the nonzero differences, and their signs."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    d = d[d != 0]
    a = np.abs(d)
    order = np.argsort(a, kind="stable")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(sa):
        j = i
        while j + 1 < len(sa) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks, np.sign(d)


def _exact_upper(ranks2: np.ndarray, w2: int) -> float:
    """P(W+ >= w) under random signs; ranks are doubled to integers."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    hi = 0
    for r in ranks2:
        r = int(r)
        counts[r:hi + r + 1] += counts[:hi + 1].copy()
        hi += r
    return float(counts[w2:].sum() / counts.sum())


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def wilcoxon_signed_rank(x, y, side: str = "greater") -> float:
    """One-sided paired signed-rank test.

    ``side="greater"`` tests whether ``x`` tends to exceed ``y``. Zero
    differences are dropped; tied magnitudes get average ranks. The null
    distribution is enumerated exactly for up to 25 nonzero pairs, above
    that a tie-corrected normal approximation is used.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 1:
        raise ValueError("x and y must be paired 1-d samples of equal nonzero length")
    if side not in ("greater", "less"):
        raise ValueError(f"side must be 'greater' or 'less', got {side!r}")
    ranks, signs = signed_ranks(x, y)
    n = len(ranks)
    if n == 0:
        log.info("wilcoxon: all paired differences are zero; returning p = 1")
        return 1.0
    if side == "less":
        signs = -signs
    w_plus = float(ranks[signs > 0].sum())
    if n <= EXACT_WILCOXON_MAX:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        return _exact_upper(ranks2, int(round(2 * w_plus)))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts**3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    return _normal_sf((w_plus - mean) / math.sqrt(var))


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def regularized_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """P(T > t) for Student's t with ``df`` degrees of freedom."""
    tail = 0.5 * regularized_beta(df / (df + t * t), 0.5 * df, 0.5)
    return tail if t > 0 else 1.0 - tail


def paired_t_test(diffs: Sequence[float], side: str = "greater") -> float:
    """One-sided one-sample t-test on paired differences.

    Raises DegenerateTestError when the differences have zero variance.
    """
    d = np.asarray(diffs, dtype=np.float64)
    if d.ndim != 1 or len(d) < 2:
        raise ValueError("paired t-test needs at least 2 differences")
    if side not in ("greater", "less"):
        raise ValueError(f"side must be 'greater' or 'less', got {side!r}")
    n = len(d)
    sd = float(np.std(d, ddof=1))
    if sd == 0.0 or not math.isfinite(sd):
        raise DegenerateTestError("zero variance in paired differences")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    if side == "less":
        t = -t
    return student_t_sf(t, n - 1)
