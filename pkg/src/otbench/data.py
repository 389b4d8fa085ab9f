"""Dataset manifest ingestion and validation.

A manifest is a UTF-8 CSV with the exact header
``image_path,label,lesion_type,mask_path``. Labels are ``healthy`` or
``diseased``; lesion_type is ``none`` exactly for healthy records and
one of ``active``, ``inactive``, ``active/inactive`` otherwise. Fields
must not contain commas (rows with extra separators are rejected, there
is no quoting). Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

__all__ = ["ManifestRecord", "DatasetManifest", "load_manifest", "write_manifest", "MANIFEST_HEADER"]

MANIFEST_HEADER = "image_path,label,lesion_type,mask_path"
VALID_LABELS = ("healthy", "diseased")
VALID_LESION_TYPES = ("active", "inactive", "active/inactive", "none")


@dataclass(frozen=True)
class ManifestRecord:
    image_path: Path
    label: str
    lesion_type: str
    mask_path: Path | None


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    source: str

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.records:
            counts[rec.label] = counts.get(rec.label, 0) + 1
        return counts

    def with_masks(self) -> "DatasetManifest":
        """Subset of records that carry a segmentation mask."""
        return DatasetManifest(
            records=tuple(r for r in self.records if r.mask_path is not None), source=self.source
        )


def _parse_row(line: str, row_no: int) -> tuple[str, str, str, str]:
    fields = line.split(",")
    if len(fields) != 4:
        raise ValidationError(
            f"manifest row {row_no}: expected 4 comma-separated fields, got {len(fields)} "
            "(paths containing commas are not supported)"
        )
    return tuple(f.strip() for f in fields)  # type: ignore[return-value]


def load_manifest(path: str | Path, segmentation: bool = False) -> DatasetManifest:
    """Read and validate a manifest CSV.

    With segmentation=True every diseased record must reference a mask
    file. Referenced image and mask files must exist; duplicate paths and
    inconsistent label/lesion_type combinations are rejected with the
    offending row number.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"manifest file not found: {path}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise ValidationError(f"manifest {path} is empty")
    if lines[0].strip() != MANIFEST_HEADER:
        raise ValidationError(f"manifest {path}: header must be exactly {MANIFEST_HEADER!r}, got {lines[0]!r}")

    base = path.parent
    records: list[ManifestRecord] = []
    seen_images: set[Path] = set()
    seen_masks: set[Path] = set()
    for row_no, line in enumerate(lines[1:], start=2):
        image_s, label, lesion, mask_s = _parse_row(line, row_no)
        if not image_s:
            raise ValidationError(f"manifest row {row_no}: empty image_path")
        if label not in VALID_LABELS:
            raise ValidationError(f"manifest row {row_no}: label must be one of {VALID_LABELS}, got {label!r}")
        if lesion not in VALID_LESION_TYPES:
            raise ValidationError(
                f"manifest row {row_no}: lesion_type must be one of {VALID_LESION_TYPES}, got {lesion!r}"
            )
        if (lesion == "none") != (label == "healthy"):
            raise ValidationError(
                f"manifest row {row_no}: lesion_type {lesion!r} inconsistent with label {label!r} "
                "(healthy records must have lesion_type=none and only those)"
            )
        image_path = (base / image_s).resolve() if not os.path.isabs(image_s) else Path(image_s)
        if image_path in seen_images:
            raise ValidationError(f"manifest row {row_no}: duplicate image_path {image_s!r}")
        seen_images.add(image_path)
        if not image_path.is_file():
            raise ValidationError(f"manifest row {row_no}: image file does not exist: {image_path}")

        mask_path: Path | None = None
        if mask_s:
            mask_path = (base / mask_s).resolve() if not os.path.isabs(mask_s) else Path(mask_s)
            if mask_path in seen_masks:
                raise ValidationError(f"manifest row {row_no}: duplicate mask_path {mask_s!r}")
            seen_masks.add(mask_path)
            if not mask_path.is_file():
                raise ValidationError(f"manifest row {row_no}: mask file does not exist: {mask_path}")
        elif segmentation and label == "diseased":
            raise ValidationError(f"manifest row {row_no}: diseased record without mask_path in segmentation mode")

        records.append(ManifestRecord(image_path=image_path, label=label, lesion_type=lesion, mask_path=mask_path))
    return DatasetManifest(records=tuple(records), source=str(path))


def write_manifest(records: list[ManifestRecord], path: str | Path) -> Path:
    """Write records as a manifest CSV with paths relative to the file."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p: Path) -> str:
        try:
            return os.path.relpath(p, base)
        except ValueError:  # different drive on some platforms
            return str(p)

    lines = [MANIFEST_HEADER]
    for rec in records:
        mask = rel(rec.mask_path) if rec.mask_path is not None else ""
        for field_value in (rel(rec.image_path), rec.label, rec.lesion_type, mask):
            if "," in field_value:
                raise ValidationError(f"manifest field contains a comma and cannot be written: {field_value!r}")
        lines.append(f"{rel(rec.image_path)},{rec.label},{rec.lesion_type},{mask}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
