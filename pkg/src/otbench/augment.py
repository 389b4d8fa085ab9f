"""Paired image/mask augmentation.

Every transform is an exact pixel permutation (plus one max-normalized
copy), so masks stay geometrically aligned with their images and lesion
pixel counts are preserved. Rotations are clockwise. Works on planes
(H, W), RGB stacks (H, W, 3) and boolean masks alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .imgproc import normalize_max

__all__ = ["SamplePair", "TaggedPair", "rotate90", "flip_h", "flip_v", "zoom_center", "augment_pair", "AUGMENT_TAGS"]

AUGMENT_TAGS = ("rot90", "rot180", "rot270", "normalized", "hflip", "vflip")

TAG_SUFFIXES = {
    "rot90": "_r90",
    "rot180": "_r180",
    "rot270": "_r270",
    "normalized": "_norm",
    "hflip": "_hf",
    "vflip": "_vf",
    "zoom": "_zoom",
}


@dataclass(frozen=True)
class SamplePair:
    """An image with an optional lesion mask of matching spatial size."""

    image: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.image.ndim not in (2, 3):
            raise ValidationError(f"sample image must be 2-D or (H, W, 3), got shape {self.image.shape}")
        if self.mask is not None and self.mask.shape != self.image.shape[:2]:
            raise ValidationError(
                f"mask shape {self.mask.shape} does not match image shape {self.image.shape[:2]}"
            )


@dataclass(frozen=True)
class TaggedPair:
    tag: str
    image: np.ndarray
    mask: np.ndarray | None


def rotate90(p: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Lossless clockwise rotation by 90, 180 or 270 degrees."""
    if quarter_turns not in (1, 2, 3):
        raise ValidationError(f"rotate90: quarter_turns must be 1, 2 or 3, got {quarter_turns}")
    return np.ascontiguousarray(np.rot90(p, k=-quarter_turns, axes=(0, 1)))


def flip_h(p: np.ndarray) -> np.ndarray:
    """Column reversal (mirror left/right)."""
    return np.ascontiguousarray(np.flip(p, axis=1))


def flip_v(p: np.ndarray) -> np.ndarray:
    """Row reversal (mirror top/bottom)."""
    return np.ascontiguousarray(np.flip(p, axis=0))


def zoom_center(p: np.ndarray, keep: float = 0.9) -> np.ndarray:
    """Center-crop to the given fraction and resize back with
    nearest-neighbor sampling. Ablation-only transform, not part of the
    default augmentation set."""
    if not 0.0 < keep <= 1.0:
        raise ValidationError(f"zoom_center: keep fraction must be in (0, 1], got {keep}")
    h, w = p.shape[:2]
    ch = max(1, int(round(h * keep)))
    cw = max(1, int(round(w * keep)))
    top = (h - ch) // 2
    left = (w - cw) // 2
    crop = p[top : top + ch, left : left + cw]
    rows = np.minimum((np.arange(h) * ch) // h, ch - 1)
    cols = np.minimum((np.arange(w) * cw) // w, cw - 1)
    return np.ascontiguousarray(crop[np.ix_(rows, cols)])


def _apply(pair: SamplePair, transform) -> tuple[np.ndarray, np.ndarray | None]:
    image = transform(pair.image)
    mask = transform(pair.mask) if pair.mask is not None else None
    return image, mask


def augment_pair(pair: SamplePair, include_zoom: bool = False) -> list[TaggedPair]:
    """Derive the standard augmentation set from one sample.

    Returns exactly six tagged pairs: the three clockwise rotations, a
    max-normalized copy (mask unchanged), and the horizontal and vertical
    flips. The original sample is not duplicated into the set. With
    include_zoom a seventh center-crop variant is appended.
    """
    out: list[TaggedPair] = []
    for turns, tag in ((1, "rot90"), (2, "rot180"), (3, "rot270")):
        image, mask = _apply(pair, lambda a, t=turns: rotate90(a, t))
        out.append(TaggedPair(tag, image, mask))
    normalized = _normalize_image(pair.image)
    out.append(TaggedPair("normalized", normalized, None if pair.mask is None else pair.mask.copy()))
    image, mask = _apply(pair, flip_h)
    out.append(TaggedPair("hflip", image, mask))
    image, mask = _apply(pair, flip_v)
    out.append(TaggedPair("vflip", image, mask))
    if include_zoom:
        image, mask = _apply(pair, zoom_center)
        out.append(TaggedPair("zoom", image, mask))
    return out


def _normalize_image(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return normalize_max(image)
    peak = float(image.max())
    if peak <= 0.0:
        raise ValidationError("augment: cannot max-normalize an all-zero image")
    return image / peak
