"""Training loop, evaluation and run reports."""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from fictsc.data import BatchIterator, load_dataset, pad_to_length, zscore_per_channel_train_stats
from fictsc.harness.metrics import MetricSet, compute_metrics
from fictsc.harness.synthetic import generate_synthetic_shift
from fictsc.models import ModelConfig, build
from fictsc.optim import FICConfig, NonFiniteLossError, OptimizerState, fic_step, sam_step
from fictsc.sharpness import sharpness

WARMUP_STEPS = 10


@dataclass
class RunReport:
    config: dict
    metrics: MetricSet
    train_metrics: MetricSet
    loss_curve: list
    steps: int
    trigger_rate: float
    mean_scale: float
    time_per_iter: float
    backward_passes: int
    sharpness_per_sample: object = None
    sharpness_batch_mean: object = None
    aborted: bool = False
    error: str = ""
    model: object = field(default=None, repr=False, compare=False)

    def records(self, include_time=True):
        """``key=value`` lines; wall-clock fields can be left out for bitwise comparisons."""
        out = [f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}" for k, v in self.config.items()]
        out += [f"test.{k}={v!r}" for k, v in self.metrics.as_dict().items()]
        out += [f"train.{k}={v!r}" for k, v in self.train_metrics.as_dict().items()]
        out.append(f"steps={self.steps}")
        out.append(f"final_loss={self.loss_curve[-1] if self.loss_curve else float('nan')!r}")
        out.append(f"trigger_rate={self.trigger_rate!r}")
        out.append(f"mean_scale={self.mean_scale!r}")
        out.append(f"backward_passes={self.backward_passes}")
        if include_time:
            out.append(f"time_per_iter={self.time_per_iter!r}")
        for tag, rep in (("per_sample", self.sharpness_per_sample), ("batch_mean", self.sharpness_batch_mean)):
            if rep is not None:
                out.append(f"sharpness.{tag}={rep.sharpness!r}")
                out.append(f"fim_norm.{tag}={rep.fim_norm!r}")
        out.append(f"aborted={int(self.aborted)}")
        if self.error:
            out.append(f"error={self.error}")
        return out

    def summary(self):
        m = self.metrics
        rows = [
            ("optimizer", self.config.get("optimizer", "?")),
            ("seed", self.config.get("seed", "?")),
            ("steps", self.steps),
            ("test accuracy", f"{m.accuracy:.4f}"),
            ("balanced accuracy", f"{m.balanced_accuracy:.4f}"),
            ("macro F1", f"{m.f1:.4f}"),
            ("train accuracy", f"{self.train_metrics.accuracy:.4f}"),
            ("trigger rate", f"{self.trigger_rate:.3f}"),
            ("mean scale", f"{self.mean_scale:.4f}"),
            ("sec / iter", f"{self.time_per_iter:.5f}"),
        ]
        if self.sharpness_per_sample is not None:
            rows.append(("sharpness (per-sample)", f"{self.sharpness_per_sample.sharpness:.3e}"))
        if self.aborted:
            rows.append(("ABORTED", self.error))
        w = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{w}}  {v}" for k, v in rows)

    def write(self, path, loss_path=None):
        with open(path, "w") as fh:
            fh.write("\n".join(self.records()) + "\n")
        if loss_path is not None:
            with open(loss_path, "w") as fh:
                fh.write("step loss\n")
                for i, v in enumerate(self.loss_curve, start=1):
                    fh.write(f"{i} {v!r}\n")


def evaluate(model, dataset):
    if dataset.n == 0:
        raise ValueError("empty dataset")
    pred = model.predict(dataset.series)
    return compute_metrics(dataset.labels, pred, max(dataset.num_classes, model.config.classes))


def prepare_data(config):
    """Load or generate (train, test) and apply the configured preprocessing."""
    if config.synthetic:
        train, test = generate_synthetic_shift(config.recipe)
    else:
        fmt = config.data_format or None
        train = load_dataset(config.train_path, format=fmt, split="train")
        test = load_dataset(config.test_path, format=fmt, split="test")
        if list(train.class_names) != list(test.class_names):
            # relabel test onto the train class list
            index = {c: i for i, c in enumerate(train.class_names)}
            missing = [c for c in test.class_names if c not in index]
            if missing:
                from fictsc.data import DatasetError
                raise DatasetError(f"test split has classes absent from train: {missing}")
            labels = np.array([index[test.class_names[k]] for k in test.labels], dtype=np.int64)
            test = type(test)(test.series, labels, list(train.class_names), split="test",
                              name=test.name, lengths=test.lengths)
        L = config.pad_length or max(train.T, test.T)
        if train.T != L or train.variable_length:
            train = pad_to_length(train, L)
        if test.T != L or test.variable_length:
            test = pad_to_length(test, L)
    if config.zscore:
        train, test = zscore_per_channel_train_stats(train, test)
    return train, test


def model_config_for(config, train):
    return ModelConfig(config.architecture, d=train.d, T=train.T, classes=train.num_classes,
                       width=config.width, blocks=config.blocks,
                       use_instance_norm=config.instance_norm, seed=config.seed)


def train(config, data=None, log=None):
    """Run one experiment and return its RunReport (the trained model rides along as ``.model``)."""
    config.validate()
    train_ds, test_ds = data if data is not None else prepare_data(config)
    model = build(model_config_for(config, train_ds))
    state = OptimizerState.for_params(model.params, lr=config.lr, weight_decay=config.weight_decay)
    fic = FICConfig(config.epsilon, enabled=config.optimizer == "fic")
    batches = BatchIterator(train_ds, config.batch_size, seed=config.seed)

    losses, times, trig, scales = [], [], [], []
    passes = 0
    aborted, error = False, ""
    try:
        for epoch in range(config.epochs):
            for _, xb, yb in batches.epoch_batches(epoch):
                t0 = time.perf_counter()
                if config.optimizer == "sam":
                    diag = sam_step(model, xb, yb, config.rho, state, log)
                else:
                    diag = fic_step(model, xb, yb, fic, state, log)
                times.append(time.perf_counter() - t0)
                losses.append(diag.loss)
                trig.append(diag.triggered)
                scales.append(diag.scale_applied)
                passes += diag.backward_passes
    except (NonFiniteLossError, FloatingPointError) as exc:
        aborted, error = True, str(exc)

    timed = times[WARMUP_STEPS:] if len(times) > WARMUP_STEPS else times
    report = RunReport(
        config=config.snapshot(),
        metrics=_safe_eval(model, test_ds),
        train_metrics=_safe_eval(model, train_ds),
        loss_curve=losses,
        steps=len(losses),
        trigger_rate=float(np.mean(trig)) if trig else 0.0,
        mean_scale=float(np.mean(scales)) if scales else 1.0,
        time_per_iter=float(np.mean(timed)) if timed else 0.0,
        backward_passes=passes,
        aborted=aborted,
        error=error,
        model=model,
    )
    if config.sharpness and not aborted:
        report.sharpness_per_sample = sharpness(model, train_ds, config.alpha, "per-sample")
        report.sharpness_batch_mean = sharpness(model, train_ds, config.alpha, "batch-mean")
    return report


def _safe_eval(model, dataset):
    try:
        return evaluate(model, dataset)
    except FloatingPointError:
        nan = math.nan
        return MetricSet(nan, nan, nan, nan, nan)
