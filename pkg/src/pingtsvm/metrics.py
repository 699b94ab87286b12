"""Confusion matrices and the derived classification metrics, as exact fractions."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

NA = "n/a"
METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "specificity")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    """Each metric is a Fraction, or None when its denominator is zero."""

    accuracy: Fraction | None
    precision: Fraction | None
    recall: Fraction | None
    f1: Fraction | None
    specificity: Fraction | None

    def items(self):
        return [(name, getattr(self, name)) for name in METRIC_NAMES]


def confusion(y_true, y_pred, positive: int = 1) -> ConfusionMatrix:
    y_true = np.asarray(y_true).reshape(-1)
    y_pred = np.asarray(y_pred).reshape(-1)
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("no labels to compare")
    if positive not in (1, -1):
        raise ValueError(f"positive class must be +1 or -1, got {positive}")
    t = y_true == positive
    p = y_pred == positive
    return ConfusionMatrix(tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)),
                           tn=int(np.sum(~t & ~p)), fn=int(np.sum(t & ~p)))


def _ratio(num, den):
    return Fraction(num, den) if den else None


def report(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(
        accuracy=Fraction(cm.tp + cm.tn, cm.total),
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
    )


def as_float(value: Fraction | None) -> float | None:
    return None if value is None else float(value)


def accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true)
    return float(np.mean(y_true == np.asarray(y_pred)))
