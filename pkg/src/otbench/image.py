"""Array conventions and 8-bit PNG/JPEG I/O.

Images are plain numpy arrays throughout the package:

* plane  -- float64 array of shape (H, W), intensities in [0, 1]
* rgb    -- float64 array of shape (H, W, 3), three co-registered planes
* mask   -- bool array of shape (H, W), True = lesion

8-bit files decode as v / 255. Planes are written back with
round(x * 255) quantization; values are clipped to [0, 1] first so
unclamped intermediates (e.g. zero-mean normalized output) stay writable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError


def validate_plane(p: np.ndarray, name: str = "plane", clamped: bool = True) -> np.ndarray:
    """Check the (H, W) float plane convention; returns the array as float64."""
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"{name}: expected a 2-D array with positive dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name}: contains non-finite values")
    if clamped and (a.min() < 0.0 or a.max() > 1.0):
        raise ValidationError(f"{name}: intensities outside [0, 1] (min {a.min():.6g}, max {a.max():.6g})")
    return a


def validate_rgb(img: np.ndarray) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(f"rgb image: expected shape (H, W, 3), got {a.shape}")
    for c in range(3):
        validate_plane(a[:, :, c], name=f"rgb channel {c}")
    return a


def validate_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"{name}: expected a 2-D array with positive dimensions, got shape {a.shape}")
    return a.astype(bool)


def load_rgb(path: str | Path) -> np.ndarray:
    """Decode an 8-bit image file as an (H, W, 3) float array in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except FileNotFoundError:
        raise ValidationError(f"image file not found: {path}") from None
    except Exception as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def load_plane(path: str | Path) -> np.ndarray:
    """Decode an 8-bit image file as a single grayscale plane in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
    except FileNotFoundError:
        raise ValidationError(f"image file not found: {path}") from None
    except Exception as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def load_auto(path: str | Path) -> np.ndarray:
    """Decode as a grayscale plane when the file is single-channel,
    otherwise as an (H, W, 3) RGB array."""
    try:
        with Image.open(path) as im:
            mode = im.mode
    except FileNotFoundError:
        raise ValidationError(f"image file not found: {path}") from None
    except Exception as exc:
        raise ValidationError(f"cannot decode image {path}: {exc}") from exc
    if mode in ("1", "L", "I", "I;16", "F"):
        return load_plane(path)
    return load_rgb(path)


def load_mask(path: str | Path) -> np.ndarray:
    """Decode an 8-bit single-channel mask; any nonzero pixel is lesion."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError:
        raise ValidationError(f"mask file not found: {path}") from None
    except Exception as exc:
        raise ValidationError(f"cannot decode mask {path}: {exc}") from exc
    return arr != 0


def save_plane(p: np.ndarray, path: str | Path) -> None:
    """Write a plane as 8-bit grayscale PNG with round(x * 255) quantization."""
    a = np.asarray(p, dtype=np.float64)
    if a.ndim != 2:
        raise ValidationError(f"save_plane: expected a 2-D array, got shape {a.shape}")
    q = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")


def save_rgb(img: np.ndarray, path: str | Path) -> None:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(f"save_rgb: expected shape (H, W, 3), got {a.shape}")
    q = np.rint(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="RGB").save(path, format="PNG")


def save_mask(m: np.ndarray, path: str | Path) -> None:
    """Write a boolean mask as 8-bit PNG, 0 = background, 255 = lesion."""
    a = validate_mask(m)
    Image.fromarray(a.astype(np.uint8) * 255, mode="L").save(path, format="PNG")
