"""Flatness diagnostics at a trained point.

Sharpness uses the second-order estimate ``alpha^2 * ||F||_1 / (2 * (1 + L))``
with ``||F||_1`` taken either from the dataset-mean gradient ("batch-mean") or
as the mean of per-sample squared gradient norms ("per-sample"), the latter
being the Fisher expectation itself and the one that stays informative at a
minimum.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fictsc.data import TimeSeriesDataset

ESTIMATORS = ("batch-mean", "per-sample")


class NotAtMinimumError(ValueError):
    pass


def _xy(data):
    if isinstance(data, TimeSeriesDataset):
        return data.series, data.labels
    X, y = data
    return np.asarray(X), (None if y is None else np.asarray(y))


def _grad_vec(model, X, y):
    loss, grads = model.loss_and_grad(X, y)
    return loss, np.concatenate([np.ravel(g) for g in grads.values()])


def empirical_fim_norm(model, data, estimator="per-sample"):
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    X, y = _xy(data)
    if len(X) == 0:
        raise ValueError("empty dataset")
    if estimator == "batch-mean":
        _, g = _grad_vec(model, X, y)
        return float(g @ g)
    total = 0.0
    for i in range(len(X)):
        _, g = _grad_vec(model, X[i:i + 1], None if y is None else y[i:i + 1])
        total += float(g @ g)
    return total / len(X)


def sharpness_value(alpha, fim_norm, loss):
    return alpha * alpha * fim_norm / (2.0 * (1.0 + loss))


@dataclass
class SharpnessReport:
    alpha: float
    loss_at_point: float
    fim_norm: float
    sharpness: float
    estimator: str
    grad_norm: float

    def record(self):
        return (f"alpha={self.alpha!r} loss_at_point={self.loss_at_point!r} fim_norm={self.fim_norm!r} "
                f"sharpness={self.sharpness!r} estimator={self.estimator} grad_norm={self.grad_norm!r}")


def sharpness(model, data, alpha=0.05, estimator="per-sample"):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    X, y = _xy(data)
    loss, g = _grad_vec(model, X, y)
    fim = float(g @ g) if estimator == "batch-mean" else empirical_fim_norm(model, (X, y), estimator)
    return SharpnessReport(alpha, loss, fim, sharpness_value(alpha, fim, loss), estimator,
                           float(np.sqrt(g @ g)))


@dataclass
class Lemma1Report:
    hessian_trace: float
    fim_trace: float
    relative_gap: float
    grad_norm: float


def hessian_trace_fd(model, X, y, step=1e-4):
    """Trace of the mean-loss Hessian from central differences of the gradient."""
    params = model.params
    theta = params.flatten()
    trace = 0.0
    try:
        for i in range(theta.size):
            probe = theta.copy()
            probe[i] += step
            params.unflatten(probe)
            gp = _grad_vec(model, X, y)[1][i]
            probe[i] = theta[i] - step
            params.unflatten(probe)
            gm = _grad_vec(model, X, y)[1][i]
            trace += (gp - gm) / (2.0 * step)
    finally:
        params.unflatten(theta)
    return trace


def lemma1_check(model, data, grad_tol=1e-4, max_params=200, step=1e-4):
    """Compare Hessian trace with the per-sample Fisher trace at a converged point."""
    X, y = _xy(data)
    if model.params.n > max_params:
        raise ValueError(f"model has {model.params.n} parameters; limit is {max_params}")
    _, g = _grad_vec(model, X, y)
    gnorm = float(np.sqrt(g @ g))
    if gnorm > grad_tol:
        raise NotAtMinimumError(f"gradient norm {gnorm:.3g} exceeds {grad_tol:.3g}; not near a minimum")
    h = hessian_trace_fd(model, X, y, step)
    f = empirical_fim_norm(model, (X, y), "per-sample")
    return Lemma1Report(float(h), float(f), float(abs(h - f) / abs(h)), gnorm)


@dataclass
class LandscapeSlice:
    direction1: np.ndarray
    direction2: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray  # (len(alphas), len(betas))

    @property
    def resolution(self):
        return len(self.alphas)

    def write(self, path):
        rows = [f"{a!r} {b!r} {self.losses[i, j]!r}"
                for i, a in enumerate(self.alphas) for j, b in enumerate(self.betas)]
        Path(path).write_text("# a b loss\n" + "\n".join(rows) + "\n")


def _group_normalize(model, vec):
    out = np.empty_like(vec)
    pos = 0
    for p in model.params:
        k = p.size
        seg = vec[pos:pos + k]
        dn = np.linalg.norm(seg)
        out[pos:pos + k] = 0.0 if dn == 0 else seg * (np.linalg.norm(p.values) / dn)
        pos += k
    return out


def random_directions(model, seed, filter_normalize=True):
    """Two orthogonal directions, each rescaled per parameter tensor to the tensor's norm."""
    rng = np.random.default_rng(seed)
    n = model.params.n
    d1, d2 = rng.normal(size=n), rng.normal(size=n)
    if filter_normalize:
        d1, d2 = _group_normalize(model, d1), _group_normalize(model, d2)
    n1 = d1 @ d1
    if n1 > 0:
        d2 = d2 - (d2 @ d1) / n1 * d1
    n2 = np.linalg.norm(d2)
    if n2 > 0:
        d2 *= np.sqrt(n1) / n2
    return d1, d2


def landscape_slice(model, data, seed=0, radius=1.0, resolution=21, directions=None,
                    filter_normalize=True):
    """Mean loss on the grid ``theta + a*d1 + b*d2`` for a, b in [-radius, radius]."""
    if resolution < 3 or resolution % 2 == 0:
        raise ValueError("resolution must be odd and >= 3")
    X, y = _xy(data)
    if directions is None:
        d1, d2 = random_directions(model, seed, filter_normalize)
    else:
        d1, d2 = (np.asarray(d, dtype=np.float64) for d in directions)
    theta = model.params.flatten()
    grid = np.linspace(-radius, radius, resolution)
    grid[resolution // 2] = 0.0
    losses = np.empty((resolution, resolution))
    try:
        for i, a in enumerate(grid):
            for j, b in enumerate(grid):
                model.params.unflatten(theta + a * d1 + b * d2)
                losses[i, j] = model.loss(X, y)
    finally:
        model.params.unflatten(theta)
    return LandscapeSlice(d1, d2, grid, grid.copy(), losses)
