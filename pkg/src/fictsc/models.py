"""Classifiers: flatten-linear, MLP, and an Inception-style 1-D CNN.

All three end in logits of shape (batch, C).  The MLP and CNN share the
two-layer head ``F -> F (ReLU) -> C``; the CNN backbone maps ``d x T`` to
``F x T`` with parallel convolutions and mean-pools over time.
"""

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from fictsc import tensor as tn
from fictsc.data import instance_normalize_array
from fictsc.tensor import ComputationRecord, ParameterSet, Tensor

ARCHITECTURES = ("linear", "mlp", "inception-lite")
BRANCH_KERNELS = (9, 19, 39)
POOL_SIZE = 3

CHECKPOINT_MAGIC = b"FICTSCK\x00"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    architecture: str = "inception-lite"
    d: int = 1
    T: int = 1
    classes: int = 2
    width: int = 128
    blocks: int = 1
    use_instance_norm: bool = False
    seed: int = 0

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}; choose from {ARCHITECTURES}")
        if min(self.d, self.T, self.classes, self.width) < 1:
            raise ValueError("d, T, classes and width must all be positive")
        if self.architecture == "inception-lite":
            if self.width % 4:
                raise ValueError("inception-lite width must be divisible by 4")
            if self.blocks < 1:
                raise ValueError("inception-lite needs at least one block")


def parameter_count(cfg):
    """Closed-form number of scalar parameters for ``cfg``."""
    d, T, C, F = cfg.d, cfg.T, cfg.classes, cfg.width
    head = F * F + F + F * C + C
    if cfg.architecture == "linear":
        return d * T * C + C
    if cfg.architecture == "mlp":
        return d * T * F + F + head
    q = F // 4
    total, cin = 0, d
    for _ in range(cfg.blocks):
        total += q * cin * (sum(BRANCH_KERNELS) + 1) + 4 * q
        cin = F
    return total + head


class Model:
    def __init__(self, config, params):
        self.config = config
        self.params = params

    # -- forward

    def _prepare(self, batch):
        x = np.asarray(batch, dtype=np.float64)
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.d, cfg.T):
            raise ValueError(f"expected batch of shape (n, {cfg.d}, {cfg.T}), got {x.shape}")
        if cfg.use_instance_norm:
            x = instance_normalize_array(x)
        return Tensor(x)

    def _head(self, h):
        p = self.params
        h = tn.relu(tn.affine(h, p["head.w1"], p["head.b1"]))
        return tn.affine(h, p["head.w2"], p["head.b2"])

    def forward(self, batch):
        x = self._prepare(batch)
        p, cfg = self.params, self.config
        if cfg.architecture == "linear":
            out = tn.affine(tn.flatten(x), p["linear.w"], p["linear.b"])
        elif cfg.architecture == "mlp":
            h = tn.relu(tn.affine(tn.flatten(x), p["input.w"], p["input.b"]))
            out = self._head(h)
        else:
            h = x
            for blk in range(cfg.blocks):
                pre = f"block{blk}"
                branches = [tn.conv1d(h, p[f"{pre}.conv{k}.w"], p[f"{pre}.conv{k}.b"])
                            for k in BRANCH_KERNELS]
                pooled = tn.max_pool1d(h, POOL_SIZE)
                branches.append(tn.conv1d(pooled, p[f"{pre}.pool.w"], p[f"{pre}.pool.b"]))
                h = tn.relu(tn.concat_channels(branches))
            out = self._head(tn.mean_time(h))
        if not np.all(np.isfinite(out.values)):
            raise FloatingPointError("non-finite logits; parameters may have diverged")
        return out

    def logits(self, batch):
        return self.forward(batch).values

    def predict(self, batch, chunk=256):
        batch = np.asarray(batch)
        preds = [np.argmax(self.logits(batch[i:i + chunk]), axis=1) for i in range(0, len(batch), chunk)]
        return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)

    # -- losses

    def loss(self, batch, labels):
        return tn.softmax_cross_entropy(self.forward(batch), labels).item()

    def loss_and_grad(self, batch, labels):
        """Mean cross-entropy and its gradient for every parameter."""
        self.params.zero_grad()
        with ComputationRecord() as rec:
            loss = tn.softmax_cross_entropy(self.forward(batch), labels)
        tn.backward(rec, loss)
        grads = {name: (np.zeros(t.shape) if t.grad is None else t.grad)
                 for name, t in self.params.items()}
        return loss.item(), grads


def _uniform(rng, shape, fan_in):
    # He-uniform: keeps ReLU activations at unit scale
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build(config):
    """Construct a model with fan-in-scaled uniform weights and zero biases."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    d, T, C, F = config.d, config.T, config.classes, config.width
    ps = ParameterSet()
    if config.architecture == "linear":
        ps.add("linear.w", _uniform(rng, (d * T, C), d * T))
        ps.add("linear.b", np.zeros(C))
    else:
        if config.architecture == "mlp":
            ps.add("input.w", _uniform(rng, (d * T, F), d * T))
            ps.add("input.b", np.zeros(F))
        else:
            q, cin = F // 4, d
            for blk in range(config.blocks):
                for k in BRANCH_KERNELS:
                    ps.add(f"block{blk}.conv{k}.w", _uniform(rng, (q, cin, k), cin * k))
                    ps.add(f"block{blk}.conv{k}.b", np.zeros(q))
                ps.add(f"block{blk}.pool.w", _uniform(rng, (q, cin, 1), cin))
                ps.add(f"block{blk}.pool.b", np.zeros(q))
                cin = F
        ps.add("head.w1", _uniform(rng, (F, F), F))
        ps.add("head.b1", np.zeros(F))
        ps.add("head.w2", _uniform(rng, (F, C), F))
        ps.add("head.b2", np.zeros(C))
    model = Model(config, ps)
    assert ps.n == parameter_count(config)
    return model


# --------------------------------------------------------------- checkpoints

def save_checkpoint(model, path):
    """Binary record: 8-byte magic, version byte, length-prefixed JSON config,
    then a length-prefixed little-endian float64 parameter vector."""
    cfg = json.dumps(asdict(model.config), sort_keys=True).encode()
    flat = model.params.flatten()
    blob = (CHECKPOINT_MAGIC + bytes([CHECKPOINT_VERSION]) + struct.pack("<I", len(cfg)) + cfg
            + struct.pack("<Q", flat.size) + flat.astype("<f8").tobytes())
    Path(path).write_bytes(blob)


def load_checkpoint(path):
    blob = Path(path).read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint file (bad magic)")
    if blob[8] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob[8]}")
    (clen,) = struct.unpack_from("<I", blob, 9)
    pos = 13
    config = ModelConfig(**json.loads(blob[pos:pos + clen].decode()))
    pos += clen
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    flat = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64)
    model = build(config)
    model.params.unflatten(flat)
    return model
