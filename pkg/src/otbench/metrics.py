"""Classification and segmentation metrics plus fold aggregation.

Ratios are computed from exact integer tallies. A metric whose
denominator is zero is reported as 0.0 and flagged as degenerate rather
than raising, so fold aggregation always stays total. Serialized metric
names are the lowercase strings: accuracy, precision, recall, f1, dice,
iou, pixel_accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .image import validate_mask

__all__ = [
    "ConfusionCounts",
    "FoldSummary",
    "confusion_counts",
    "precision",
    "recall",
    "f1",
    "accuracy",
    "classification_metrics",
    "macro_classification_metrics",
    "dice_score",
    "iou_score",
    "pixel_accuracy",
    "segmentation_metrics",
    "aggregate_folds",
]

CLASSIFICATION_METRICS = ("accuracy", "precision", "recall", "f1")
SEGMENTATION_METRICS = ("pixel_accuracy", "dice", "iou")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class FoldSummary:
    """One fold's metric row; all values are in [0, 1]."""

    fold: int
    metrics: dict[str, float]
    degenerate: tuple[str, ...] = ()
    extra: dict[str, int] = field(default_factory=dict)


def confusion_counts(pred: Sequence, truth: Sequence, positive) -> ConfusionCounts:
    """Tally TP/FP/TN/FN of predictions against the designated positive class."""
    if len(pred) != len(truth):
        raise ValidationError(f"confusion_counts: length mismatch ({len(pred)} vs {len(truth)})")
    if len(pred) == 0:
        raise ValidationError("confusion_counts: empty input")
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        if t == positive:
            if p == positive:
                tp += 1
            else:
                fn += 1
        else:
            if p == positive:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def precision(c: ConfusionCounts) -> float:
    """TP / (FP + TP); 0.0 when nothing was predicted positive."""
    return _ratio(c.tp, c.fp + c.tp)[0]


def recall(c: ConfusionCounts) -> float:
    """TP / (FN + TP); 0.0 when there are no positive samples."""
    return _ratio(c.tp, c.fn + c.tp)[0]


def f1(c: ConfusionCounts) -> float:
    """2*TP / (FP + 2*TP + FN), the harmonic mean of precision and recall."""
    return _ratio(2 * c.tp, c.fp + 2 * c.tp + c.fn)[0]


def accuracy(c: ConfusionCounts) -> float:
    """(TN + TP) / total."""
    return _ratio(c.tn + c.tp, c.total)[0]


def classification_metrics(c: ConfusionCounts) -> tuple[dict[str, float], tuple[str, ...]]:
    """All four classification ratios plus the names of degenerate ones."""
    values: dict[str, float] = {}
    degenerate: list[str] = []
    for name, (num, den) in {
        "accuracy": (c.tn + c.tp, c.total),
        "precision": (c.tp, c.fp + c.tp),
        "recall": (c.tp, c.fn + c.tp),
        "f1": (2 * c.tp, c.fp + 2 * c.tp + c.fn),
    }.items():
        value, flag = _ratio(num, den)
        values[name] = value
        if flag:
            degenerate.append(name)
    return values, tuple(degenerate)


def macro_classification_metrics(pred: Sequence, truth: Sequence, classes: Sequence) -> dict[str, float]:
    """One-vs-rest metrics macro-averaged over the given classes.

    With exactly two classes this is not used by the harness, which
    reports the positive-class metrics directly.
    """
    if len(classes) < 2:
        raise ValidationError("macro averaging needs at least two classes")
    totals = {name: 0.0 for name in CLASSIFICATION_METRICS}
    for cls in classes:
        values, _ = classification_metrics(confusion_counts(pred, truth, positive=cls))
        for name in totals:
            totals[name] += values[name]
    return {name: value / len(classes) for name, value in totals.items()}


def _mask_counts(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int]:
    a = validate_mask(pred, "pred")
    b = validate_mask(gt, "gt")
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    return inter, int(np.count_nonzero(a)), int(np.count_nonzero(b))


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|X n Y| / (|X| + |Y|); two empty masks score 1.0."""
    inter, na, nb = _mask_counts(pred, gt)
    if na + nb == 0:
        return 1.0
    return 2 * inter / (na + nb)


def iou_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """|X n Y| / |X u Y|; two empty masks score 1.0."""
    inter, na, nb = _mask_counts(pred, gt)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Fraction of pixels whose labels agree."""
    a = validate_mask(pred, "pred")
    b = validate_mask(gt, "gt")
    if a.shape != b.shape:
        raise ValidationError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a == b)) / a.size


def segmentation_metrics(pred: np.ndarray, gt: np.ndarray) -> dict[str, float]:
    return {
        "pixel_accuracy": pixel_accuracy(pred, gt),
        "dice": dice_score(pred, gt),
        "iou": iou_score(pred, gt),
    }


def aggregate_folds(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation (divisor n)."""
    if len(values) == 0:
        raise ValidationError("aggregate_folds: empty fold list")
    mean = math.fsum(values) / len(values)
    var = math.fsum((v - mean) ** 2 for v in values) / len(values)
    return mean, math.sqrt(var)
