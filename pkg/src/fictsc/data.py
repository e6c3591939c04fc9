"""Loading, padding and normalizing labeled time-series datasets.

Two on-disk formats are supported:

* the wide CSV fixture format: a ``#d=<int>,T=<int>,classes=<a,b,...>`` header
  followed by one row per sample, ``label,v(c0,t0),v(c0,t1),...,v(c1,t0),...``
  (channel-major);
* a subset of the sktime ``.ts`` text format (``@problemName``,
  ``@dimensions``, ``@classLabel``, ``@data`` with ``:``-separated channels and
  a trailing ``:label``).
"""

import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

IN_MIN_STD = 1e-5


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class TimeSeriesDataset:
    series: np.ndarray  # (n, d, T)
    labels: np.ndarray  # (n,) int
    class_names: list
    split: str = "train"
    name: str = "dataset"
    lengths: np.ndarray = field(default=None)

    def __post_init__(self):
        self.series = np.asarray(self.series, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = [str(c) for c in self.class_names]
        if self.series.ndim != 3:
            raise DatasetError(f"series must be (n, d, T), got shape {self.series.shape}")
        if self.labels.shape != (self.series.shape[0],):
            raise DatasetError("labels length does not match number of series")
        C = len(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= C):
            raise DatasetError(f"labels outside [0, {C})")
        if self.lengths is None:
            self.lengths = np.full(self.series.shape[0], self.series.shape[2], dtype=np.int64)
        self.lengths = np.asarray(self.lengths, dtype=np.int64)

    @property
    def n(self):
        return self.series.shape[0]

    @property
    def d(self):
        return self.series.shape[1]

    @property
    def T(self):
        return self.series.shape[2]

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def variable_length(self):
        return bool(self.lengths.size and self.lengths.min() != self.lengths.max())

    def subset(self, idx):
        idx = np.asarray(idx)
        return replace(self, series=self.series[idx], labels=self.labels[idx],
                       lengths=self.lengths[idx])

    def with_series(self, series):
        return replace(self, series=series, lengths=self.lengths.copy())


# ------------------------------------------------------------------- loading

_CSV_HEADER = re.compile(r"#\s*d\s*=\s*(\d+)\s*,\s*T\s*=\s*(\d+)\s*,\s*classes\s*=(.*)$")


def load_dataset(path, format=None, split="train", name=None):
    path = Path(path)
    if format is None:
        format = "ts" if path.suffix.lower() == ".ts" else "csv"
    if format not in ("csv", "ts"):
        raise DatasetError(f"unknown format {format!r}")
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    name = name or path.stem
    if format == "csv":
        return _parse_csv(text, split, name)
    return _parse_ts(text, split, name)


def _to_float(tok, lineno):
    try:
        return float(tok)
    except ValueError:
        raise DatasetError(f"not a number: {tok!r}", lineno) from None


def _assemble(rows, class_names, d, split, name):
    # rows: list of (label_index, array (d, T_i))
    if not rows:
        raise DatasetError("no samples")
    lengths = np.array([r[1].shape[1] for r in rows], dtype=np.int64)
    T = int(lengths.max())
    series = np.zeros((len(rows), d, T))
    for i, (_, arr) in enumerate(rows):
        series[i, :, :arr.shape[1]] = arr
    labels = np.array([r[0] for r in rows], dtype=np.int64)
    return TimeSeriesDataset(series, labels, class_names, split=split, name=name, lengths=lengths)


def _parse_csv(text, split, name):
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DatasetError("empty file", 1)
    m = _CSV_HEADER.match(lines[0].strip())
    if m is None:
        raise DatasetError("expected header '#d=<int>,T=<int>,classes=<list>'", 1)
    d, T = int(m.group(1)), int(m.group(2))
    classes = [c.strip() for c in m.group(3).split(",") if c.strip()]
    if d < 1 or T < 1 or not classes:
        raise DatasetError("header needs d >= 1, T >= 1 and at least one class", 1)
    index = {c: i for i, c in enumerate(classes)}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split(",")
        label = toks[0].strip()
        if label not in index:
            raise DatasetError(f"unknown label {label!r}", lineno)
        vals = np.array([_to_float(t, lineno) for t in toks[1:]])
        if vals.size == 0 or vals.size % d:
            raise DatasetError(f"{vals.size} values is not a multiple of d={d}", lineno)
        if vals.size // d > T:
            raise DatasetError(f"series length {vals.size // d} exceeds declared T={T}", lineno)
        rows.append((index[label], vals.reshape(d, -1)))
    return _assemble(rows, classes, d, split, name)


def _parse_ts(text, split, name):
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        raise DatasetError("empty file", 1)
    classes, d, in_data = None, None, False
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not in_data:
            if not line.startswith("@"):
                raise DatasetError("data before @data tag", lineno)
            key, _, rest = line[1:].partition(" ")
            key = key.lower()
            if key == "problemname":
                name = rest.strip() or name
            elif key in ("dimensions", "dimension"):
                try:
                    d = int(rest.strip())
                except ValueError:
                    raise DatasetError(f"bad @dimensions value {rest.strip()!r}", lineno) from None
            elif key == "classlabel":
                parts = rest.split()
                if not parts or parts[0].lower() != "true":
                    raise DatasetError("only labeled data (@classLabel true ...) is supported", lineno)
                classes = parts[1:]
            elif key == "data":
                if classes is None:
                    raise DatasetError("@data before @classLabel", lineno)
                in_data = True
            continue
        parts = line.split(":")
        if len(parts) < 2:
            raise DatasetError("expected channels followed by ':label'", lineno)
        label = parts[-1].strip()
        if label not in classes:
            raise DatasetError(f"unknown label {label!r}", lineno)
        chans = parts[:-1]
        if d is None:
            d = len(chans)
        if len(chans) != d:
            raise DatasetError(f"expected {d} channels, found {len(chans)}", lineno)
        vals = []
        for ch in chans:
            toks = [t for t in ch.split(",") if t.strip()]
            if any(t.strip() == "?" for t in toks):
                raise DatasetError("missing values are not supported", lineno)
            vals.append([_to_float(t, lineno) for t in toks])
        if len({len(v) for v in vals}) != 1 or not vals[0]:
            raise DatasetError("channels of one sample differ in length", lineno)
        rows.append((classes.index(label), np.array(vals)))
    if not in_data:
        raise DatasetError("missing @data section")
    return _assemble(rows, classes, d, split, name)


def save_csv(dataset, path):
    """Write ``dataset`` in the wide CSV fixture format (values at full precision)."""
    lines = [f"#d={dataset.d},T={dataset.T},classes={','.join(dataset.class_names)}"]
    for i in range(dataset.n):
        L = int(dataset.lengths[i])
        vals = dataset.series[i, :, :L].ravel()
        lines.append(",".join([dataset.class_names[dataset.labels[i]]] + [repr(float(v)) for v in vals]))
    Path(path).write_text("\n".join(lines) + "\n")


# ------------------------------------------------------------- preprocessing

def pad_to_length(dataset, L):
    """Right-pad every series with zeros to length ``L``."""
    if L < int(dataset.lengths.max(initial=0)):
        raise DatasetError(f"cannot pad to {L}: observed length {int(dataset.lengths.max())}")
    out = np.zeros((dataset.n, dataset.d, L))
    keep = min(L, dataset.T)
    out[:, :, :keep] = dataset.series[:, :, :keep]
    return replace(dataset, series=out, lengths=dataset.lengths.copy())


def instance_normalize_array(x):
    """Per-sample, per-channel standardization over the last axis.

    Population standard deviation, denominator clamped below at 1e-5; channels
    with no spread map to exact zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    out = (x - mean) / np.maximum(std, IN_MIN_STD)
    flat = np.ptp(x, axis=-1, keepdims=True) == 0
    return np.where(flat, 0.0, out)


def instance_normalize(dataset):
    return dataset.with_series(instance_normalize_array(dataset.series))


def zscore_per_channel_train_stats(train, test):
    """Standardize both splits with per-channel statistics of the train split."""
    if train.d != test.d:
        raise DatasetError(f"channel mismatch: train d={train.d}, test d={test.d}")
    mean = train.series.mean(axis=(0, 2), keepdims=True)
    std = train.series.std(axis=(0, 2), keepdims=True)
    flat = (np.ptp(train.series, axis=(0, 2), keepdims=True) == 0)
    safe = np.where(flat, 1.0, std)

    def apply(ds):
        z = (ds.series - mean) / safe
        return ds.with_series(np.where(flat, 0.0, z))

    return apply(train), apply(test)


class BatchIterator:
    """Shuffled mini-batches; the order of epoch ``e`` depends only on (seed, e)."""

    def __init__(self, dataset, batch_size, seed=0):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.dataset = dataset
        self.batch_size = int(batch_size)
        self.seed = int(seed)
        self.epoch = 0
        self.position = 0

    def order(self, epoch):
        rng = np.random.default_rng([self.seed, int(epoch)])
        return rng.permutation(self.dataset.n)

    def epoch_batches(self, epoch=None):
        if epoch is None:
            epoch = self.epoch
            self.epoch += 1
        perm = self.order(epoch)
        for start in range(0, len(perm), self.batch_size):
            self.position = start
            idx = perm[start:start + self.batch_size]
            yield idx, self.dataset.series[idx], self.dataset.labels[idx]
        self.position = 0

    def __iter__(self):
        return self.epoch_batches()
