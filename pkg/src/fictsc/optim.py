"""Fisher-information-constrained gradient renormalization, AdamW, and SAM.

Under the diagonal approximation the Fisher matrix of a mini-batch is the
elementwise square of the batch-mean gradient, so its entrywise 1-norm is the
squared Euclidean gradient norm.  When that norm reaches ``epsilon`` the whole
gradient is rescaled by ``sqrt(epsilon / norm)`` before the optimizer update,
which puts the constrained norm exactly on the bound.

Any object with a ``params`` :class:`~fictsc.tensor.ParameterSet` and a
``loss_and_grad(batch, labels) -> (loss, {name: grad})`` method can be stepped.
"""

import math
import threading
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fictsc.tensor import counters


@dataclass
class FICConfig:
    epsilon: float = 2.0
    enabled: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass
class OptimizerState:
    """AdamW (``mode='adamw'``) or plain gradient descent (``mode='sgd'``).

    Weight decay is decoupled: parameters shrink by ``lr * weight_decay``
    independently of the (possibly renormalized) gradient.
    """

    lr: float = 5e-3
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    mode: str = "adamw"
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        if self.mode not in ("adamw", "sgd"):
            raise ValueError(f"unknown optimizer mode {self.mode!r}")

    @classmethod
    def for_params(cls, params, **kwargs):
        state = cls(**kwargs)
        for name, p in params.items():
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        return state


@dataclass
class StepDiagnostics:
    step: int
    loss: float
    fim_norm_before: float
    triggered: bool
    scale_applied: float
    backward_passes: int

    def record(self):
        return (f"step={self.step} loss={self.loss!r} fim_norm_before={self.fim_norm_before!r} "
                f"triggered={int(self.triggered)} scale={self.scale_applied!r}")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        super().__init__(f"non-finite loss at step {diagnostics.step}; step aborted")


class DiagnosticsLog:
    """Append-only diagnostics channel, optionally mirrored to a line-per-record file."""

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self.records = []
        self._pending = deque()
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.write_text("")

    def append(self, diag):
        with self._lock:
            self.records.append(diag)
            self._pending.append(diag)
            if self.path is not None:
                with self.path.open("a") as fh:
                    fh.write(diag.record() + "\n")

    def drain(self):
        with self._lock:
            out = list(self._pending)
            self._pending.clear()
        return out

    def __len__(self):
        return len(self.records)


# ---------------------------------------------------------------- FIM pieces

def _flat(grads):
    if isinstance(grads, dict):
        if not grads:
            return np.zeros(0)
        return np.concatenate([np.ravel(g) for g in grads.values()])
    return np.asarray(grads, dtype=np.float64).ravel()


def diag_fim(grads):
    """Diagonal Fisher estimate: elementwise square of the flattened gradient."""
    g = _flat(grads)
    return g * g


def fim_entrywise_norm(grads):
    g = _flat(grads)
    return float(np.dot(g, g))


def fic_renormalize(grads, epsilon):
    """Rescale ``grads`` onto ``||F||_1 = epsilon`` when the bound is reached.

    Returns ``(grads', diagnostics)``; untriggered input is returned as is.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    norm = fim_entrywise_norm(grads)
    if norm < epsilon:
        return grads, StepDiagnostics(0, float("nan"), norm, False, 1.0, 0)
    scale = math.sqrt(epsilon / norm)
    if isinstance(grads, dict):
        out = OrderedDict((k, g * scale) for k, g in grads.items())
    else:
        out = np.asarray(grads, dtype=np.float64) * scale
    return out, StepDiagnostics(0, float("nan"), norm, True, scale, 0)


# ------------------------------------------------------------------- updates

def apply_update(params, grads, state):
    state.t += 1
    b1, b2 = state.betas
    for name, p in params.items():
        g = grads[name]
        w = p.values
        if state.weight_decay:
            w = w * (1.0 - state.lr * state.weight_decay)
        if state.mode == "sgd":
            w = w - state.lr * g
        else:
            m = state.m.get(name)
            if m is None:
                m = state.m[name] = np.zeros(p.shape)
                state.v[name] = np.zeros(p.shape)
            v = state.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            mhat = m / (1.0 - b1 ** state.t)
            vhat = v / (1.0 - b2 ** state.t)
            w = w - state.lr * mhat / (np.sqrt(vhat) + state.eps)
        p.values = w


def fic_step(model, batch, labels, fic, state, log=None):
    """One training iteration: forward, backward, conditional renormalization, update."""
    before = counters["backward"]
    loss, grads = model.loss_and_grad(batch, labels)
    passes = counters["backward"] - before
    step = state.t + 1
    if not math.isfinite(loss):
        raise NonFiniteLossError(StepDiagnostics(step, loss, float("nan"), False, 1.0, passes))
    if fic is not None and fic.enabled:
        grads, info = fic_renormalize(grads, fic.epsilon)
        norm, triggered, scale = info.fim_norm_before, info.triggered, info.scale_applied
    else:
        norm, triggered, scale = fim_entrywise_norm(grads), False, 1.0
    apply_update(model.params, grads, state)
    diag = StepDiagnostics(step, loss, norm, triggered, scale, passes)
    if log is not None:
        log.append(diag)
    return diag


def plain_step(model, batch, labels, state, log=None):
    return fic_step(model, batch, labels, None, state, log)


def sam_step(model, batch, labels, rho=0.05, state=None, log=None):
    """Sharpness-aware step: gradient at ``theta + rho * g / ||g||`` drives the update."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    before = counters["backward"]
    loss, g1 = model.loss_and_grad(batch, labels)
    step = state.t + 1
    if not math.isfinite(loss):
        raise NonFiniteLossError(StepDiagnostics(step, loss, float("nan"), False, 1.0,
                                                 counters["backward"] - before))
    norm_sq = fim_entrywise_norm(g1)
    if norm_sq == 0.0:
        update = g1
    else:
        coef = rho / math.sqrt(norm_sq)
        saved = model.params.copy_values()
        for name, p in model.params.items():
            p.values = p.values + coef * g1[name]
        try:
            _, update = model.loss_and_grad(batch, labels)
        finally:
            for name, p in model.params.items():
                p.values = saved[name]
    apply_update(model.params, update, state)
    diag = StepDiagnostics(step, loss, norm_sq, False, 1.0, counters["backward"] - before)
    if log is not None:
        log.append(diag)
    return diag


# ------------------------------------------------------- convergence probing

@dataclass
class DecreaseReport:
    monotone: bool
    violations: list
    decay_exponent: float
    min_grad_sq: np.ndarray
    fit_range: tuple


def sufficient_decrease_probe(losses, grad_norms_sq=None, fit_start=None, tol=0.0):
    """Check ``L[t+1] <= L[t]`` along a trajectory and fit the decay of
    ``min_{s<=t} ||grad_s||^2`` as a power of ``t`` (log-log least squares).

    ``fit_start`` defaults to a tenth of the trajectory to skip the transient.
    """
    losses = np.asarray(losses, dtype=np.float64)
    viol = [int(t) for t in np.nonzero(losses[1:] > losses[:-1] + tol)[0]]
    exponent, mins, rng = float("nan"), np.zeros(0), (0, 0)
    if grad_norms_sq is not None:
        g = np.asarray(grad_norms_sq, dtype=np.float64)
        mins = np.minimum.accumulate(g)
        T = len(mins)
        start = max(1, T // 10) if fit_start is None else max(1, int(fit_start))
        t = np.arange(1, T + 1)
        sel = slice(start - 1, T)
        ok = mins[sel] > 0
        if ok.sum() >= 2:
            x, y = np.log(t[sel][ok]), np.log(mins[sel][ok])
            exponent = float(np.polyfit(x, y, 1)[0])
        rng = (start, T)
    return DecreaseReport(not viol and bool(np.all(np.isfinite(losses))), viol, exponent, mins, rng)


def run_full_batch(model, batch, labels, lr, steps, fic=None, weight_decay=0.0):
    """Deterministic full-batch gradient descent; returns (losses, grad_norm_sq).

    ``losses`` has ``steps + 1`` entries (including the final point);
    ``grad_norm_sq`` holds the raw squared gradient norm at each iterate.
    """
    state = OptimizerState.for_params(model.params, lr=lr, weight_decay=weight_decay, mode="sgd")
    losses, gsq = [], []
    for _ in range(steps):
        diag = fic_step(model, batch, labels, fic, state)
        losses.append(diag.loss)
        gsq.append(diag.fim_norm_before)
    final, g = model.loss_and_grad(batch, labels)
    losses.append(final)
    gsq.append(fim_entrywise_norm(g))
    return np.array(losses), np.array(gsq)
