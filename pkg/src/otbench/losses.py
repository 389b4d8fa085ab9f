"""Differentiable training losses with analytic gradients.

The overlap losses are the smoothed soft relaxations of the Dice and
Jaccard scores over probability-valued predictions:

    soft dice loss    L = 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
    soft jaccard loss L = 1 - (sum(p*g) + eps) / (sum(p) + sum(g) - sum(p*g) + eps)

Both are bounded to [0, 1] and the jaccard loss dominates the dice loss
on every input. Reductions use a fixed deterministic order so repeated
runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = ["LossValue", "soft_dice_loss", "soft_jaccard_loss", "scce_loss", "bce_loss"]

DEFAULT_SMOOTHING = 1.0


@dataclass(frozen=True)
class LossValue:
    """Scalar loss plus its gradient with respect to the predictions."""

    loss: float
    grad: np.ndarray


def _check_overlap_inputs(pred: np.ndarray, gt: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(gt, dtype=np.float64).ravel()
    if p.size != g.size:
        raise ValidationError(f"loss: prediction length {p.size} != target length {g.size}")
    if not eps > 0:
        raise ValidationError(f"loss: smoothing must be > 0, got {eps}")
    return p, g


def soft_dice_loss(pred_probs: np.ndarray, gt: np.ndarray, eps: float = DEFAULT_SMOOTHING) -> LossValue:
    """Smoothed soft Dice loss over per-pixel probabilities."""
    p, g = _check_overlap_inputs(pred_probs, gt, eps)
    num = 2.0 * float(np.sum(p * g)) + eps
    den = float(np.sum(p)) + float(np.sum(g)) + eps
    loss = 1.0 - num / den
    grad = (num - 2.0 * g * den) / (den * den)
    return LossValue(loss=loss, grad=grad)


def soft_jaccard_loss(pred_probs: np.ndarray, gt: np.ndarray, eps: float = DEFAULT_SMOOTHING) -> LossValue:
    """Smoothed soft Jaccard (IoU) loss over per-pixel probabilities."""
    p, g = _check_overlap_inputs(pred_probs, gt, eps)
    inter = float(np.sum(p * g))
    num = inter + eps
    den = float(np.sum(p)) + float(np.sum(g)) - inter + eps
    loss = 1.0 - num / den
    grad = (num * (1.0 - g) - g * den) / (den * den)
    return LossValue(loss=loss, grad=grad)


def scce_loss(logits: np.ndarray, label: int) -> LossValue:
    """Sparse categorical cross-entropy on one sample.

    Softmax over the class scores followed by the negative log-likelihood
    of the true class; gradient with respect to the logits is
    softmax - one_hot(label).
    """
    z = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= label < z.size:
        raise ValidationError(f"scce_loss: label {label} out of range for {z.size} classes")
    shifted = z - z.max()
    expz = np.exp(shifted)
    total = float(np.sum(expz))
    probs = expz / total
    loss = float(np.log(total) - shifted[label])
    grad = probs.copy()
    grad[label] -= 1.0
    return LossValue(loss=loss, grad=grad)


def bce_loss(pred_probs: np.ndarray, gt: np.ndarray, clip: float = 1e-12) -> LossValue:
    """Mean binary cross-entropy. Kept behind an explicit choice for
    comparison runs; the overlap losses are the defaults."""
    p = np.asarray(pred_probs, dtype=np.float64).ravel()
    g = np.asarray(gt, dtype=np.float64).ravel()
    if p.size != g.size:
        raise ValidationError(f"loss: prediction length {p.size} != target length {g.size}")
    pc = np.clip(p, clip, 1.0 - clip)
    loss = float(np.mean(-(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))))
    grad = (pc - g) / (pc * (1.0 - pc)) / p.size
    return LossValue(loss=loss, grad=grad)
