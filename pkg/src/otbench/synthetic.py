"""Seeded synthetic fundus-like datasets for harness tests and demos.

Diseased images carry one bright disk (the stand-in lesion) on a dark
noisy background; healthy images are background only. Generation is
fully determined by the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .augment import SamplePair
from .data import DatasetManifest, ManifestRecord, write_manifest
from .errors import ValidationError
from .image import save_mask, save_plane

__all__ = ["bright_disk_pair", "bright_disk_dataset", "write_synthetic_dataset"]

_LESION_TYPES = ("active", "inactive", "active/inactive")


def bright_disk_pair(
    rng: np.random.Generator, size: int = 64, noise: float = 0.05, with_disk: bool = True
) -> SamplePair:
    """One synthetic image/mask pair; the mask is empty when with_disk is False."""
    if size < 16:
        raise ValidationError(f"synthetic images need size >= 16, got {size}")
    background = 0.15 + noise * rng.standard_normal((size, size))
    mask = np.zeros((size, size), dtype=bool)
    if with_disk:
        radius = float(rng.uniform(size * 0.1, size * 0.2))
        margin = int(np.ceil(radius)) + 2
        cy = float(rng.uniform(margin, size - margin))
        cx = float(rng.uniform(margin, size - margin))
        yy, xx = np.ogrid[:size, :size]
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius
        background[mask] = 0.75 + noise * rng.standard_normal(int(mask.sum()))
    return SamplePair(image=np.clip(background, 0.0, 1.0), mask=mask)


def bright_disk_dataset(n: int, size: int = 64, seed: int = 0, noise: float = 0.05) -> list[SamplePair]:
    """n seeded disk images with their masks."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [bright_disk_pair(rng, size=size, noise=noise) for _ in range(n)]


def write_synthetic_dataset(
    directory: str | Path,
    n_diseased: int = 200,
    n_healthy: int = 0,
    size: int = 64,
    seed: int = 0,
    noise: float = 0.05,
) -> Path:
    """Render a synthetic dataset to disk and return the manifest path.

    Diseased records get an image and mask PNG plus a lesion type drawn
    from the three diseased categories; healthy records get only an
    image. Layout: <dir>/images/*.png, <dir>/masks/*.png, <dir>/manifest.csv.
    """
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "masks").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    records: list[ManifestRecord] = []
    for i in range(n_diseased):
        pair = bright_disk_pair(rng, size=size, noise=noise, with_disk=True)
        image_path = directory / "images" / f"diseased_{i:04d}.png"
        mask_path = directory / "masks" / f"diseased_{i:04d}.png"
        save_plane(pair.image, image_path)
        save_mask(pair.mask, mask_path)
        lesion = _LESION_TYPES[int(rng.integers(len(_LESION_TYPES)))]
        records.append(
            ManifestRecord(image_path=image_path, label="diseased", lesion_type=lesion, mask_path=mask_path)
        )
    for i in range(n_healthy):
        pair = bright_disk_pair(rng, size=size, noise=noise, with_disk=False)
        image_path = directory / "images" / f"healthy_{i:04d}.png"
        save_plane(pair.image, image_path)
        records.append(ManifestRecord(image_path=image_path, label="healthy", lesion_type="none", mask_path=None))
    return write_manifest(records, directory / "manifest.csv")


def load_synthetic_manifest(directory: str | Path) -> DatasetManifest:
    from .data import load_manifest

    return load_manifest(Path(directory) / "manifest.csv")
