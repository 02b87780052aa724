"""Confusion matrices and the four reported metrics (macro-averaged)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricQuad:
    acc: float  # percentage
    prc: float
    rec: float
    f1: float

    def as_tuple(self):
        return (self.acc, self.prc, self.rec, self.f1)


def confusion(y_true, y_pred, c: int) -> np.ndarray:
    """cm[i, j] = number of records of true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"label arrays differ: {y_true.shape} vs {y_pred.shape}")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= c):
            raise ValueError(f"label outside [0, {c})")
    return np.bincount(y_true * c + y_pred, minlength=c * c).reshape(c, c)


def per_class(cm: np.ndarray):
    """Per-class (precision, recall, f1); empty denominators give 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    prec = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    rec = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    return prec, rec, f1


def metrics(cm) -> MetricQuad:
    """Accuracy in percent; precision, recall and F1 macro-averaged over the
    classes that occur in the ground truth."""
    cm = np.asarray(cm)
    total = cm.sum()
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or total <= 0:
        raise ValueError("metrics need a non-empty square confusion matrix")
    prec, rec, f1 = per_class(cm)
    present = cm.sum(axis=1) > 0
    return MetricQuad(
        acc=float(100.0 * np.trace(cm) / total),
        prc=float(prec[present].mean()),
        rec=float(rec[present].mean()),
        f1=float(f1[present].mean()),
    )


def evaluate(y_true, y_pred, c: int) -> MetricQuad:
    return metrics(confusion(y_true, y_pred, c))
