"""Paired Wilcoxon signed-rank test.

Zero differences are dropped before ranking; tied absolute differences get
average ranks.  Up to ``EXACT_MAX`` pairs the null distribution of the
positive-rank sum is enumerated exactly (dynamic programming over the 2^n sign
assignments); beyond that a tie-corrected normal approximation with
continuity correction is used.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

EXACT_MAX = 20
MIN_PAIRS = 5


class InsufficientDataError(ValueError):
    pass


@dataclass
class WilcoxonResult:
    statistic: float  # sum of ranks of positive differences
    pvalue: float
    n: int
    method: str
    alternative: str


def _exact_tail(ranks2, stat2, alternative):
    # ranks2 are doubled ranks (integers even with ties)
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2.astype(np.int64):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r] if r else counts
        counts = counts + shifted
    probs = counts / counts.sum()
    upper = probs[stat2:].sum()  # P(W+ >= observed)
    lower = probs[:stat2 + 1].sum()  # P(W+ <= observed)
    if alternative == "greater":
        return upper
    if alternative == "less":
        return lower
    return min(1.0, 2.0 * min(upper, lower))


def wilcoxon_signed_rank(a, b, alternative="greater", method="auto"):
    """Test whether paired scores ``a`` tend to exceed ``b``.

    ``alternative`` is ``"greater"`` (a > b), ``"less"`` or ``"two-sided"``;
    ``method`` is ``"auto"``, ``"exact"`` or ``"approx"``.
    """
    if alternative not in ("greater", "less", "two-sided"):
        raise ValueError(f"unknown alternative {alternative!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n < MIN_PAIRS:
        raise InsufficientDataError(f"only {n} non-zero paired differences; need at least {MIN_PAIRS}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX else "approx"
    if method == "exact":
        p = _exact_tail(np.rint(2 * ranks), int(round(2 * w_plus)), alternative)
    elif method == "approx":
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_counts ** 3 - tie_counts).sum() / 48.0
        sd = math.sqrt(var)
        if alternative == "greater":
            p = norm.sf((w_plus - mean - 0.5) / sd)
        elif alternative == "less":
            p = norm.cdf((w_plus - mean + 0.5) / sd)
        else:
            z = (abs(w_plus - mean) - 0.5) / sd
            p = min(1.0, 2.0 * norm.sf(z))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w_plus, float(min(1.0, p)), n, method, alternative)
