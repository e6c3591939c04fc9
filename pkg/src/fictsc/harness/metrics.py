"""Confusion-matrix classification metrics."""

from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricSet:
    accuracy: float
    balanced_accuracy: float
    f1: float
    precision: float
    recall: float

    def as_dict(self):
        return asdict(self)


def confusion_matrix(y_true, y_pred, num_classes=None):
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    C = num_classes or int(max(y_true.max(initial=-1), y_pred.max(initial=-1)) + 1)
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def metrics_from_confusion(cm):
    """Macro metrics over the classes that occur in either truth or prediction.

    A class never predicted has precision 0; a predicted class with no true
    samples has recall 0.  Balanced accuracy averages recall over the classes
    present in the truth.
    """
    cm = np.asarray(cm, dtype=np.float64)
    n = cm.sum()
    if n == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    active = (support > 0) | (predicted > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, tp / predicted, 0.0)
        recall = np.where(support > 0, tp / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return MetricSet(
        accuracy=float(tp.sum() / n),
        balanced_accuracy=float(recall[support > 0].mean()),
        f1=float(f1[active].mean()),
        precision=float(precision[active].mean()),
        recall=float(recall[active].mean()),
    )


def compute_metrics(y_true, y_pred, num_classes=None):
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, num_classes))
