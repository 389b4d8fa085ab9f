"""Desk-scale trainable baselines: handcrafted features plus logistic
decision layers, optimized with Adam.

These stand in for large pretrained networks so the full training and
evaluation machinery (losses, optimizer, cross-validation, reporting)
can be exercised end to end on a CPU in seconds. Linear algebra is kept
to elementwise kernels and numpy reductions, so training is
bit-reproducible for a given seed regardless of BLAS threading.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .augment import SamplePair
from .batching import balanced_batches
from .errors import TrainingError, ValidationError
from .image import validate_plane
from .imgproc import mean_filter
from .losses import LossValue, bce_loss, scce_loss, soft_dice_loss, soft_jaccard_loss
from .metrics import dice_score
from .optim import adam_init, adam_step

__all__ = [
    "PIXEL_FEATURE_NAMES",
    "SEGMENTATION_LOSSES",
    "PixelSegmenterModel",
    "ImageClassifierModel",
    "extract_pixel_features",
    "extract_image_features",
    "train_pixel_segmenter",
    "predict_mask",
    "predict_probabilities",
    "train_image_classifier",
    "predict_label",
    "save_model",
    "load_model",
]

PIXEL_FEATURE_NAMES = ("intensity", "local_mean", "local_std", "gradient_magnitude")
IMAGE_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)

SEGMENTATION_LOSSES: dict[str, Callable[..., LossValue]] = {
    "dice": soft_dice_loss,
    "jaccard": soft_jaccard_loss,
    "bce": bce_loss,  # comparison-only; not exposed as a benchmark default
}

MODEL_FORMAT_VERSION = 1

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def _correlate3(p: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(p, 1, mode="reflect")
    h, w = p.shape
    out = np.zeros_like(p)
    for i in range(3):
        for j in range(3):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def _standardize_columns(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        col = x[:, j]
        sd = float(col.std())
        out[:, j] = 0.0 if sd == 0.0 else (col - float(col.mean())) / sd
    return out


def extract_pixel_features(p: np.ndarray, window: int = 5, standardize: bool = True) -> np.ndarray:
    """Per-pixel features, shape (H*W, 4).

    Columns are intensity, local mean and local std over a window x window
    neighborhood, and Sobel gradient magnitude, each standardized over
    the image (a zero-variance column stays all zero).
    """
    a = validate_plane(p, clamped=False)
    local_mean = mean_filter(a, window)
    local_sq = mean_filter(a * a, window)
    local_std = np.sqrt(np.maximum(local_sq - local_mean * local_mean, 0.0))
    gx = _correlate3(a, _SOBEL_X)
    gy = _correlate3(a, _SOBEL_Y)
    grad = np.sqrt(gx * gx + gy * gy)
    feats = np.stack([a.ravel(), local_mean.ravel(), local_std.ravel(), grad.ravel()], axis=1)
    return _standardize_columns(feats) if standardize else feats


def extract_image_features(p: np.ndarray) -> np.ndarray:
    """Global pooled features of one plane: mean, std and five quantiles."""
    a = validate_plane(p, clamped=False)
    pooled = [float(a.mean()), float(a.std())]
    pooled.extend(float(np.quantile(a, q)) for q in IMAGE_QUANTILES)
    return np.array(pooled)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _linear(x: np.ndarray, weights: np.ndarray, bias: float) -> np.ndarray:
    # column-wise accumulation: deterministic, no BLAS reduction involved
    z = np.full(x.shape[0], bias)
    for j in range(x.shape[1]):
        z += x[:, j] * weights[j]
    return z


# ---------------------------------------------------------------------------
# pixel segmenter


@dataclass
class PixelSegmenterModel:
    """Logistic model over per-pixel features with a decision threshold."""

    weights: np.ndarray
    bias: float
    feature_window: int = 5
    threshold: float = 0.5
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_val_dice: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def _segmenter_probs(model: PixelSegmenterModel, p: np.ndarray) -> np.ndarray:
    feats = extract_pixel_features(p, window=model.feature_window)
    return _sigmoid(_linear(feats, model.weights, model.bias)).reshape(p.shape)


def predict_probabilities(model: PixelSegmenterModel, p: np.ndarray) -> np.ndarray:
    """Per-pixel foreground probabilities, shape (H, W), values in (0, 1)."""
    return _segmenter_probs(model, p)


def predict_mask(model: PixelSegmenterModel, p: np.ndarray, threshold: float | None = None) -> np.ndarray:
    """Threshold the per-pixel probabilities into a boolean lesion mask."""
    thr = model.threshold if threshold is None else threshold
    return _segmenter_probs(model, p) >= thr


def _require_masks(pairs: Sequence[SamplePair]) -> None:
    if len(pairs) == 0:
        raise ValidationError("training set is empty")
    for i, pair in enumerate(pairs):
        if pair.mask is None:
            raise ValidationError(f"training sample {i} has no mask")


def train_pixel_segmenter(
    train: Sequence[SamplePair],
    loss_kind: str = "jaccard",
    epochs: int = 200,
    lr: float = 1e-4,
    seed: int = 0,
    batch_size: int = 32,
    smoothing: float = 1.0,
    threshold: float = 0.5,
    feature_window: int = 5,
    val: Sequence[SamplePair] | None = None,
) -> PixelSegmenterModel:
    """Train the logistic pixel segmenter with a soft overlap loss.

    The loss is reduced per image, then averaged over the mini-batch.
    When a validation set is given, validation Dice is tracked every
    epoch and the parameters from the best epoch (ties resolved to the
    earliest) are retained in the returned model.
    """
    if loss_kind not in SEGMENTATION_LOSSES:
        raise ValidationError(f"unknown segmentation loss {loss_kind!r}; choose from {sorted(SEGMENTATION_LOSSES)}")
    _require_masks(train)
    if val is not None:
        _require_masks(val)
    loss_fn = SEGMENTATION_LOSSES[loss_kind]
    loss_args = {} if loss_kind == "bce" else {"eps": smoothing}

    feats = [extract_pixel_features(pair.image, window=feature_window) for pair in train]
    targets = [pair.mask.ravel().astype(np.float64) for pair in train]
    n_features = feats[0].shape[1]

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params = np.zeros(n_features + 1)
    state = adam_init(n_features + 1, lr=lr)
    model = PixelSegmenterModel(
        weights=params[:-1].copy(), bias=0.0, feature_window=feature_window, threshold=threshold
    )
    best = (-1.0, None, None)  # dice, epoch, params

    for epoch in range(epochs):
        order = rng.permutation(len(train))
        image_losses = np.empty(len(train))
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            grad = np.zeros_like(params)
            for idx in batch:
                x, g = feats[idx], targets[idx]
                z = _linear(x, params[:-1], params[-1])
                probs = _sigmoid(z)
                lv = loss_fn(probs, g, **loss_args)
                image_losses[idx] = lv.loss
                dz = lv.grad * probs * (1.0 - probs)
                for j in range(n_features):
                    grad[j] += float(np.sum(dz * x[:, j]))
                grad[-1] += float(np.sum(dz))
            grad /= len(batch)
            try:
                params, state = adam_step(params, grad, state)
            except ValidationError as exc:
                raise TrainingError(f"segmenter training diverged at epoch {epoch}: {exc}") from exc
        model.epoch_train_loss.append(float(np.mean(image_losses)))

        if val is not None:
            probe = PixelSegmenterModel(
                weights=params[:-1], bias=float(params[-1]), feature_window=feature_window, threshold=threshold
            )
            scores = [dice_score(predict_mask(probe, pair.image), pair.mask) for pair in val]
            val_dice = float(np.mean(scores))
            model.epoch_val_dice.append(val_dice)
            if val_dice > best[0]:
                best = (val_dice, epoch, params.copy())

    if val is not None and best[2] is not None:
        model.weights = best[2][:-1].copy()
        model.bias = float(best[2][-1])
        model.best_epoch = best[1]
    else:
        model.weights = params[:-1].copy()
        model.bias = float(params[-1])
    return model


# ---------------------------------------------------------------------------
# image classifier


@dataclass
class ImageClassifierModel:
    """Multinomial logistic classifier over pooled image features."""

    classes: tuple[str, ...]
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    epoch_train_loss: list[float] = field(default_factory=list)


def _classifier_logits(model: ImageClassifierModel, feats: np.ndarray) -> np.ndarray:
    x = (feats - model.feature_mean) / model.feature_scale
    return np.array(
        [float(np.sum(x * model.weights[c])) + float(model.bias[c]) for c in range(len(model.classes))]
    )


def predict_label(model: ImageClassifierModel, p: np.ndarray) -> tuple[str, dict[str, float]]:
    """Predicted class plus the softmax probability of every class."""
    logits = _classifier_logits(model, extract_image_features(p))
    shifted = np.exp(logits - logits.max())
    probs = shifted / float(np.sum(shifted))
    idx = int(np.argmax(probs))
    return model.classes[idx], {cls: float(pr) for cls, pr in zip(model.classes, probs)}


def train_image_classifier(
    train: Sequence[tuple[np.ndarray, str]],
    epochs: int = 200,
    lr: float = 1e-4,
    seed: int = 0,
    batch_size: int = 32,
) -> ImageClassifierModel:
    """Train the pooled-feature logistic classifier with cross-entropy.

    Mini-batches are class balanced (smaller classes are resampled with
    replacement), so every gradient step sees equal class representation.
    """
    if len(train) == 0:
        raise ValidationError("training set is empty")
    labels = [label for _, label in train]
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValidationError(f"classifier needs at least two classes, got {classes}")

    feats = np.stack([extract_image_features(plane) for plane, _ in train])
    mean = feats.mean(axis=0)
    scale = feats.std(axis=0)
    scale[scale == 0.0] = 1.0
    x_all = (feats - mean) / scale
    y_all = np.array([classes.index(label) for label in labels])

    n_classes, n_features = len(classes), x_all.shape[1]
    n_params = n_classes * (n_features + 1)
    params = np.zeros(n_params)
    state = adam_init(n_params, lr=lr)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    history: list[float] = []

    for _ in range(epochs):
        epoch_seed = int(rng.integers(2**31))
        losses: list[float] = []
        for batch in balanced_batches(labels, batch_size, seed=epoch_seed):
            w = params[: n_classes * n_features].reshape(n_classes, n_features)
            b = params[n_classes * n_features :]
            grad_w = np.zeros_like(w)
            grad_b = np.zeros_like(b)
            for idx in batch:
                x = x_all[idx]
                logits = np.array([float(np.sum(x * w[c])) + float(b[c]) for c in range(n_classes)])
                lv = scce_loss(logits, int(y_all[idx]))
                losses.append(lv.loss)
                for c in range(n_classes):
                    grad_w[c] += lv.grad[c] * x
                grad_b += lv.grad
            grad = np.concatenate([grad_w.ravel(), grad_b]) / len(batch)
            try:
                params, state = adam_step(params, grad, state)
            except ValidationError as exc:
                raise TrainingError(f"classifier training diverged: {exc}") from exc
        history.append(float(np.mean(losses)))

    model = ImageClassifierModel(
        classes=classes,
        weights=params[: n_classes * n_features].reshape(n_classes, n_features).copy(),
        bias=params[n_classes * n_features :].copy(),
        feature_mean=mean,
        feature_scale=scale,
    )
    model.epoch_train_loss = history
    return model


# ---------------------------------------------------------------------------
# serialization


def _floats_to_strings(a: np.ndarray) -> list[str]:
    return [repr(float(v)) for v in np.asarray(a).ravel()]


def _strings_to_floats(values: list[str], shape: tuple[int, ...]) -> np.ndarray:
    return np.array([float(v) for v in values]).reshape(shape)


def save_model(model: PixelSegmenterModel | ImageClassifierModel, path: str | Path) -> None:
    """Write a model as versioned JSON; weights are decimal strings so the
    round trip is exact."""
    if isinstance(model, PixelSegmenterModel):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "pixel_segmenter",
            "weights": _floats_to_strings(model.weights),
            "bias": repr(float(model.bias)),
            "feature_config": {"window": model.feature_window, "names": list(PIXEL_FEATURE_NAMES)},
            "threshold": model.threshold,
        }
    elif isinstance(model, ImageClassifierModel):
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "image_classifier",
            "classes": list(model.classes),
            "shape": list(model.weights.shape),
            "weights": _floats_to_strings(model.weights),
            "bias": _floats_to_strings(model.bias),
            "feature_config": {
                "pooled": ["mean", "std"] + [f"q{int(q * 100)}" for q in IMAGE_QUANTILES],
                "mean": _floats_to_strings(model.feature_mean),
                "scale": _floats_to_strings(model.feature_scale),
            },
        }
    else:
        raise ValidationError(f"cannot serialize object of type {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> PixelSegmenterModel | ImageClassifierModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file {path} is not valid JSON: {exc}") from exc
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {version!r}")
    kind = doc.get("kind")
    if kind == "pixel_segmenter":
        weights = _strings_to_floats(doc["weights"], (len(doc["weights"]),))
        return PixelSegmenterModel(
            weights=weights,
            bias=float(doc["bias"]),
            feature_window=int(doc["feature_config"]["window"]),
            threshold=float(doc["threshold"]),
        )
    if kind == "image_classifier":
        shape = tuple(doc["shape"])
        cfg = doc["feature_config"]
        return ImageClassifierModel(
            classes=tuple(doc["classes"]),
            weights=_strings_to_floats(doc["weights"], shape),
            bias=_strings_to_floats(doc["bias"], (shape[0],)),
            feature_mean=_strings_to_floats(cfg["mean"], (shape[1],)),
            feature_scale=_strings_to_floats(cfg["scale"], (shape[1],)),
        )
    raise ValidationError(f"unknown model kind {kind!r}")
