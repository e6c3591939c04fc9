"""Dense float64 tensors with a single-use tape for reverse-mode gradients.

Operations are recorded onto the innermost active :class:`ComputationRecord`
whenever one of their inputs requires gradients.  Outside a record, the same
functions simply evaluate.

    >>> w = Tensor([1.0, -2.0], requires_grad=True)
    >>> with ComputationRecord() as rec:
    ...     loss = tsum(mul(w, w))
    >>> backward(rec, loss)
    >>> w.grad
    array([ 2., -4.])
"""

import threading
from collections import Counter, OrderedDict

import numpy as np

from fictsc import kernels

# structural instrumentation: number of backward traversals executed
counters = Counter()

_local = threading.local()


class ShapeError(ValueError):
    pass


class StaleRecordError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("values", "requires_grad", "grad", "name")

    def __init__(self, values, requires_grad=False, name=None):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values.reshape(-1)[0]) if self.values.size == 1 else None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Op:
    __slots__ = ("name", "inputs", "output", "vjp")

    def __init__(self, name, inputs, output, vjp):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class ComputationRecord:
    """Ordered log of executed primitives; consumed by one :func:`backward`."""

    def __init__(self):
        self.ops = []
        self.consumed = False

    def __enter__(self):
        if self.consumed:
            raise StaleRecordError("cannot re-enter a consumed record")
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def __len__(self):
        return len(self.ops)


def _stack():
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = []
    return st


def active_record():
    st = _stack()
    return st[-1] if st else None


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(name, inputs, out_values, vjp):
    out = Tensor(out_values)
    rec = active_record()
    if rec is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        rec.ops.append(_Op(name, inputs, out, vjp))
    return out


def _shape_fail(prim, a, b):
    raise ShapeError(f"{prim}: incompatible shapes {tuple(a)} and {tuple(b)}")


# ---------------------------------------------------------------- primitives

def add(a, b):
    """Elementwise sum; ``b`` may also be a bias vector added to every row of ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _emit("add", (a, b), a.values + b.values, lambda g: (g, g))
    if a.values.ndim == 2 and b.values.ndim == 1 and a.shape[1] == b.shape[0]:
        return _emit("add", (a, b), a.values + b.values, lambda g: (g, g.sum(axis=0)))
    _shape_fail("add", a.shape, b.shape)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        _shape_fail("mul", a.shape, b.shape)
    av, bv = a.values, b.values
    return _emit("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        _shape_fail("matmul", a.shape, b.shape)
    av, bv = a.values, b.values
    return _emit("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def tsum(a):
    a = _as_tensor(a)
    shape = a.shape
    return _emit("sum", (a,), np.array(a.values.sum()), lambda g: (np.full(shape, float(np.ravel(g)[0])),))


def relu(x):
    x = _as_tensor(x)
    mask = x.values > 0
    return _emit("relu", (x,), np.where(mask, x.values, 0.0), lambda g: (g * mask,))


def flatten(x):
    """(B, C, T) -> (B, C*T), channel-major."""
    x = _as_tensor(x)
    shape = x.shape
    if len(shape) < 2:
        raise ShapeError(f"flatten: need at least 2 dims, got {shape}")
    return _emit("flatten", (x,), x.values.reshape(shape[0], -1), lambda g: (g.reshape(shape),))


def affine(x, w, b):
    """Batch of row vectors times ``w`` plus bias: (n, k) @ (k, m) + (m,)."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.values.ndim != 2 or w.values.ndim != 2 or x.shape[1] != w.shape[0]:
        _shape_fail("affine", x.shape, w.shape)
    if b.shape != (w.shape[1],):
        _shape_fail("affine", w.shape, b.shape)
    xv, wv = x.values, w.values

    def vjp(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0)

    return _emit("affine", (x, w, b), xv @ wv + b.values, vjp)


def conv1d(x, w, b=None):
    """Stride-1 convolution with zero 'same' padding.

    x: (B, Cin, T), w: (Cout, Cin, K), b: (Cout,) or None.  For even K the
    extra padding goes on the right.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.values.ndim != 3 or w.values.ndim != 3 or x.shape[1] != w.shape[1]:
        _shape_fail("conv1d", x.shape, w.shape)
    B, Cin, T = x.shape
    Cout, _, K = w.shape
    inputs = (x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (Cout,):
            _shape_fail("conv1d", w.shape, b.shape)
        inputs = (x, w, b)
    left = (K - 1) // 2
    Tp = T + K - 1
    xpad = np.zeros((B, Cin, Tp))
    xpad[:, :, left:left + T] = x.values
    cols = kernels.im2col1d(xpad, K, T)  # (B, T, Cin*K)
    wmat = w.values.reshape(Cout, Cin * K)
    out = cols @ wmat.T  # (B, T, Cout)
    if b is not None:
        out += b.values
    out = np.ascontiguousarray(out.transpose(0, 2, 1))

    def vjp(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 1))  # (B, T, Cout)
        gw = (gt.reshape(-1, Cout).T @ cols.reshape(-1, Cin * K)).reshape(Cout, Cin, K)
        gx = None
        if x.requires_grad:
            dcols = np.ascontiguousarray(gt @ wmat)
            gx = kernels.col2im1d(dcols, Cin, K, Tp)[:, :, left:left + T]
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2))

    return _emit("conv1d", inputs, out, vjp)


def max_pool1d(x, k=3):
    """Stride-1 max-pool with 'same' extent (edges see fewer candidates)."""
    x = _as_tensor(x)
    if x.values.ndim != 3:
        raise ShapeError(f"max_pool1d: expected (B, C, T), got {x.shape}")
    out, idx = kernels.maxpool1d_same(x.values, int(k))
    return _emit("max_pool1d", (x,), out,
                 lambda g: (kernels.maxpool1d_backward(np.ascontiguousarray(g), idx),))


def mean_time(x):
    """(B, C, T) -> (B, C)."""
    x = _as_tensor(x)
    if x.values.ndim != 3:
        raise ShapeError(f"mean_time: expected (B, C, T), got {x.shape}")
    T = x.shape[2]
    shape = x.shape
    return _emit("mean_time", (x,), x.values.mean(axis=2),
                 lambda g: (np.broadcast_to(g[:, :, None] / T, shape).copy(),))


def concat_channels(xs):
    xs = [_as_tensor(x) for x in xs]
    ref = xs[0].shape
    for x in xs[1:]:
        if x.values.ndim != 3 or x.shape[0] != ref[0] or x.shape[2] != ref[2]:
            _shape_fail("concat_channels", ref, x.shape)
    splits = np.cumsum([x.shape[1] for x in xs])[:-1]
    return _emit("concat_channels", tuple(xs), np.concatenate([x.values for x in xs], axis=1),
                 lambda g: tuple(np.split(g, splits, axis=1)))


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch, via shift-stable log-sum-exp."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.values.ndim != 2 or logits.shape[0] != labels.shape[0]:
        _shape_fail("softmax_cross_entropy", logits.shape, labels.shape)
    n, C = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"softmax_cross_entropy: labels outside [0, {C})")
    logp = log_softmax(logits.values)
    rows = np.arange(n)
    # clamp: -log p is mathematically >= 0, rounding can produce -0.0 or -1e-17
    loss = max(float(-logp[rows, labels].mean()), 0.0)

    def vjp(g):
        d = np.exp(logp)
        d[rows, labels] -= 1.0
        return (d * (float(np.ravel(g)[0]) / n),)

    return _emit("softmax_cross_entropy", (logits,), np.array(loss), vjp)


# ------------------------------------------------------------------ backward

def backward(record, loss):
    """Reverse traversal of ``record`` from scalar ``loss``.

    Writes a fresh ``.grad`` onto every leaf tensor that requires gradients and
    consumes the record.
    """
    if record.consumed:
        raise StaleRecordError("record already consumed by a previous backward")
    if loss.values.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not record.ops or record.ops[-1].output is not loss:
        if not any(op.output is loss for op in record.ops):
            raise StaleRecordError("loss was not produced inside this record")
    counters["backward"] += 1
    produced = {id(op.output) for op in record.ops}
    grads = {id(loss): np.ones_like(loss.values)}
    leaves = OrderedDict()
    for op in reversed(record.ops):
        g = grads.pop(id(op.output), None)
        if g is None:
            continue
        in_grads = op.vjp(g)
        for inp, gi in zip(op.inputs, in_grads):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in produced:
                leaves[key] = inp
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = np.asarray(gi, dtype=np.float64)
    for key, leaf in leaves.items():
        leaf.grad = grads[key].reshape(leaf.shape)
    record.ops = []
    record.consumed = True


# ------------------------------------------------------------ parameter sets

class ParameterSet:
    """Named parameter tensors with a fixed flattening order."""

    def __init__(self, items=()):
        self._params = OrderedDict()
        for name, value in items:
            self.add(name, value)

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        t.name = name
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    @property
    def n(self):
        return int(sum(p.size for p in self._params.values()))

    def flatten(self):
        if not self._params:
            return np.zeros(0)
        return np.concatenate([p.values.ravel() for p in self._params.values()])

    def unflatten(self, vec):
        """Write a flat vector back into the parameter buffers (in place)."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n,):
            raise ShapeError(f"unflatten: expected length {self.n}, got {vec.shape}")
        pos = 0
        for p in self._params.values():
            k = p.size
            p.values = vec[pos:pos + k].reshape(p.shape).copy()
            pos += k

    def grad_vector(self):
        parts = []
        for p in self._params.values():
            parts.append(np.zeros(p.size) if p.grad is None else p.grad.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def copy_values(self):
        return OrderedDict((k, p.values.copy()) for k, p in self._params.items())


def finite_difference_gradient(f, params, step=1e-5):
    """Central-difference gradient of scalar ``f(params)`` w.r.t. the flat vector."""
    if step <= 0:
        raise ValueError("step must be positive")
    theta = params.flatten()
    out = np.empty_like(theta)
    try:
        for i in range(theta.size):
            probe = theta.copy()
            probe[i] = theta[i] + step
            params.unflatten(probe)
            fp = float(f(params))
            probe[i] = theta[i] - step
            params.unflatten(probe)
            fm = float(f(params))
            out[i] = (fp - fm) / (2.0 * step)
    finally:
        params.unflatten(theta)
    return out
