"""Train/test distribution discrepancy via 1-D Wasserstein-1 distances.

A class distribution is the pooled multiset of one channel's values over all
time points of all samples in that class.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fictsc import kernels
from fictsc.data import DatasetError, instance_normalize, zscore_per_channel_train_stats


class EmpiricalDistribution:
    __slots__ = ("values",)

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=np.float64).ravel())
        if v.size == 0:
            raise ValueError("empirical distribution needs at least one sample")
        self.values = np.ascontiguousarray(v)

    @property
    def count(self):
        return self.values.size


def _dist(x):
    return x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution(x)


def wasserstein1(P, Q):
    """W1 between two uniform-weight empirical measures.

    Equal counts reduce to the mean absolute difference of sorted samples;
    otherwise the inverse-CDF difference is integrated exactly over the merged
    breakpoints of both quantile functions.
    """
    P, Q = _dist(P), _dist(Q)
    if P.count == Q.count:
        return float(np.mean(np.abs(P.values - Q.values)))
    return float(kernels.w1_sorted(P.values, Q.values))


def wasserstein1_quantile(P, Q):
    """Always take the unequal-count (merged quantile) path."""
    P, Q = _dist(P), _dist(Q)
    return float(kernels.w1_sorted(P.values, Q.values))


@dataclass
class DissimilarityMatrix:
    values: np.ndarray  # rows: first split's classes, columns: second split's classes
    normalized: bool = False
    label: str = ""
    class_names: list = field(default_factory=list)

    def min_max(self):
        v = self.values
        lo, hi = v.min(), v.max()
        out = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
        return DissimilarityMatrix(out, True, self.label, list(self.class_names))

    def block(self):
        head = f"# {self.label} normalized={int(self.normalized)}"
        rows = [" ".join(f"{x:.6f}" for x in row) for row in self.values]
        return "\n".join([head] + rows)


def class_values(dataset, cls, channel):
    mask = dataset.labels == cls
    if not mask.any():
        raise DatasetError(f"class {dataset.class_names[cls]!r} absent from {dataset.split} split")
    return dataset.series[mask, channel, :].ravel()


def _check(a, b, channel):
    if list(a.class_names) != list(b.class_names):
        raise DatasetError("splits have different class sets")
    if not 0 <= channel < a.d or a.d != b.d:
        raise DatasetError(f"invalid channel {channel} for d={a.d} (other split d={b.d})")


def class_dissimilarity_matrix(train, test, channel=0, normalize=False, label="train-vs-test"):
    """Entry (i, j) is W1 between train class i and test class j."""
    _check(train, test, channel)
    C = train.num_classes
    rows = [EmpiricalDistribution(class_values(train, i, channel)) for i in range(C)]
    cols = [EmpiricalDistribution(class_values(test, j, channel)) for j in range(C)]
    vals = np.array([[wasserstein1(r, c) for c in cols] for r in rows])
    mat = DissimilarityMatrix(vals, False, label, list(train.class_names))
    return mat.min_max() if normalize else mat


def between_class_matrix(dataset, channel=0, label=None):
    return class_dissimilarity_matrix(dataset, dataset, channel,
                                      label=label or f"{dataset.split}-between-class")


@dataclass
class INEffectReport:
    before: DissimilarityMatrix
    after: DissimilarityMatrix
    between_train_before: DissimilarityMatrix
    between_train_after: DissimilarityMatrix
    between_test_before: DissimilarityMatrix
    between_test_after: DissimilarityMatrix

    def mean_between(self, which):
        m = getattr(self, which).values
        C = m.shape[0]
        off = ~np.eye(C, dtype=bool)
        return float(m[off].mean()) if C > 1 else 0.0


def in_effect_report(train, test, channel=0):
    """Train-vs-test and within-split between-class W1, before and after instance normalization."""
    _check(train, test, channel)
    ntrain, ntest = instance_normalize(train), instance_normalize(test)
    return INEffectReport(
        class_dissimilarity_matrix(train, test, channel, label="train-vs-test before-IN"),
        class_dissimilarity_matrix(ntrain, ntest, channel, label="train-vs-test after-IN"),
        between_class_matrix(train, channel, "train between-class before-IN"),
        between_class_matrix(ntrain, channel, "train between-class after-IN"),
        between_class_matrix(test, channel, "test between-class before-IN"),
        between_class_matrix(ntest, channel, "test between-class after-IN"),
    )


def channel_histogram(dataset, channel=0, bins=30):
    if bins < 1:
        raise ValueError("bins must be >= 1")
    vals = dataset.series[:, channel, :].ravel()
    counts, edges = np.histogram(vals, bins=bins)
    return edges, counts


def shift_report(train, test, channel=0):
    """All matrices for one channel on raw and train-z-scored data.

    Returns a list of DissimilarityMatrix (raw values and min-max normalized).
    """
    ztrain, ztest = zscore_per_channel_train_stats(train, test)
    mats = []
    for tag, (a, b) in (("raw", (train, test)), ("zscore", (ztrain, ztest))):
        rep = in_effect_report(a, b, channel)
        for m in (rep.before, rep.after, rep.between_train_before, rep.between_train_after,
                  rep.between_test_before, rep.between_test_after):
            m.label = f"{tag} {m.label}"
            mats.append(m)
            mats.append(m.min_max())
    return mats


def write_report(mats, path, records=None):
    """Text blocks (6 decimals, row-major) followed by ``key=value`` records."""
    parts = [m.block() for m in mats]
    lines = []
    for m in mats:
        if m.normalized:
            continue
        key = m.label.replace(" ", "_")
        lines.append(f"matrix={key} " + " ".join(
            f"m{i}_{j}={float(m.values[i, j])!r}" for i in range(m.values.shape[0]) for j in range(m.values.shape[1])))
    for k, v in (records or {}).items():
        lines.append(f"{k}={v}")
    Path(path).write_text("\n\n".join(parts) + "\n\n" + "\n".join(lines) + "\n")
