"""Small closed-form models used by the convergence and curvature probes.

They follow the same protocol as :class:`fictsc.models.Model`: a ``params``
ParameterSet plus ``loss(batch, labels)`` and ``loss_and_grad(batch, labels)``,
with losses averaged over the batch.
"""

import numpy as np

from fictsc.tensor import ParameterSet


class QuadraticModel:
    """Per-sample loss ``0.5 * curvature * (theta - x_i)^2``; ``batch`` holds the centers x_i."""

    def __init__(self, theta=0.0, curvature=1.0):
        self.curvature = float(curvature)
        self.params = ParameterSet([("theta", np.array([float(theta)]))])

    @property
    def theta(self):
        return float(self.params["theta"].values[0])

    def _centers(self, batch):
        return np.asarray(batch, dtype=np.float64).reshape(-1)

    def loss(self, batch, labels=None):
        r = self.theta - self._centers(batch)
        return float(np.mean(0.5 * self.curvature * r * r))

    def loss_and_grad(self, batch, labels=None):
        r = self.theta - self._centers(batch)
        g = np.array([np.mean(self.curvature * r)])
        self.params["theta"].grad = g
        return float(np.mean(0.5 * self.curvature * r * r)), {"theta": g}


class LeastSquaresModel:
    """Gaussian regression with unit noise variance: loss ``0.5 * (y - x.w)^2``."""

    def __init__(self, w):
        self.params = ParameterSet([("w", np.asarray(w, dtype=np.float64).copy())])

    def loss(self, batch, labels):
        r = np.asarray(labels) - np.asarray(batch) @ self.params["w"].values
        return float(np.mean(0.5 * r * r))

    def loss_and_grad(self, batch, labels):
        X = np.asarray(batch, dtype=np.float64)
        r = np.asarray(labels) - X @ self.params["w"].values
        g = -(X.T @ r) / len(r)
        self.params["w"].grad = g
        return float(np.mean(0.5 * r * r)), {"w": g}


def gauss_markov_fixture(n_pairs=50, dim=3, seed=0):
    """Least-squares data whose fitted residuals are exactly +-1.

    Each design row appears twice with residuals +1 and -1, so the residuals
    are orthogonal to the design and the least-squares solution is the
    generating weight vector.  Returns (X, y, w_star).
    """
    rng = np.random.default_rng(seed)
    base = rng.normal(size=(n_pairs, dim))
    X = np.repeat(base, 2, axis=0)
    r = np.tile([1.0, -1.0], n_pairs)
    w_star = rng.normal(size=dim)
    return X, X @ w_star + r, w_star


def separable_points(n=40, seed=0, margin=1.0, scale=3.0):
    """Two linearly separable 2-D clouds, returned as (n, 1, 2) series and labels."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    direction = np.array([1.0, 1.0]) / np.sqrt(2.0)
    pts = rng.normal(size=(n, 2))
    pts -= np.outer(pts @ direction, direction)  # project onto the separating line
    sign = np.where(y == 1, 1.0, -1.0)
    offset = margin + np.abs(rng.normal(size=n))
    pts += np.outer(sign * offset, direction)
    return scale * pts[:, None, :], y


def logistic_fixture(n=4000, seed=0):
    """Samples labeled by a known two-class logistic model (well specified).

    Returns (series (n, 1, 2), labels, true weight vector).
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    w = np.array([1.5, -1.0])
    p1 = 1.0 / (1.0 + np.exp(-(x @ w + 0.3)))
    y = (rng.uniform(size=n) < p1).astype(np.int64)
    return x[:, None, :], y, w
