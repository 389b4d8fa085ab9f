"""Stratified cross-validation, the two benchmark loops and report emission.

Each fold owns an RNG stream spawned from the master seed and the fold
index, so fold-level parallelism (capped by the OTBENCH_THREADS
environment variable) cannot perturb results: reports produced with and
without parallelism are byte-identical. Augmentation is applied to
training splits only; validation data is never augmented.
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .augment import SamplePair, augment_pair
from .batching import balanced_batches
from .data import DatasetManifest, ManifestRecord, load_manifest
from .errors import OtbenchError, TrainingError, ValidationError
from .image import load_plane, load_mask, load_rgb
from .imgproc import PipelineConfig, preprocess
from .metrics import (
    CLASSIFICATION_METRICS,
    SEGMENTATION_METRICS,
    FoldSummary,
    aggregate_folds,
    classification_metrics,
    confusion_counts,
    segmentation_metrics,
)
from .models import predict_label, predict_mask, train_image_classifier, train_pixel_segmenter

__all__ = [
    "FoldPlan",
    "BenchmarkConfig",
    "BenchmarkReport",
    "stratified_kfold",
    "balanced_batches",
    "run_classification_benchmark",
    "run_segmentation_benchmark",
    "emit_report",
    "report_to_json",
    "report_to_csv",
]


# ---------------------------------------------------------------------------
# fold planning


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every record to exactly one validation fold."""

    assignment: tuple[int, ...]
    k: int
    seed: int

    def val_ids(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_ids(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]


def stratified_kfold(manifest: DatasetManifest, k: int, seed: int) -> FoldPlan:
    """Seeded stratified fold plan.

    Records are shuffled within each class and dealt round-robin onto the
    folds with a counter carried across classes, which keeps both the
    fold sizes and the per-fold class counts within one sample of perfect
    balance.
    """
    if k < 2:
        raise ValidationError(f"stratified_kfold: need k >= 2, got {k}")
    labels = [rec.label for rec in manifest.records]
    classes = sorted(set(labels))
    members = {cls: [i for i, lab in enumerate(labels) if lab == cls] for cls in classes}
    for cls, ids in members.items():
        if len(ids) < k:
            raise ValidationError(f"stratified_kfold: class {cls!r} has {len(ids)} samples, fewer than k={k}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignment = [0] * len(labels)
    counter = 0
    for cls in classes:
        ids = members[cls]
        for j in rng.permutation(len(ids)):
            assignment[ids[int(j)]] = counter % k
            counter += 1
    return FoldPlan(assignment=tuple(assignment), k=k, seed=seed)


# ---------------------------------------------------------------------------
# configuration and report types


@dataclass(frozen=True)
class BenchmarkConfig:
    """Benchmark settings; defaults follow the benchmarking framework's
    hyperparameter table (batch 32, learning rate 1e-4, 200 epochs, Adam,
    five folds)."""

    task: str  # classify | segment
    loss: str = "jaccard"
    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 200
    folds: int = 5
    seed: int = 0
    model: str = "logistic"
    threshold: float = 0.5
    positive_label: str = "diseased"
    apply_preprocess: bool = True
    apply_augment: bool = True
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self) -> None:
        if self.task not in ("classify", "segment"):
            raise ValidationError(f"benchmark task must be 'classify' or 'segment', got {self.task!r}")
        if self.folds < 2:
            raise ValidationError(f"benchmark needs at least 2 folds, got {self.folds}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be positive")
        if not self.lr > 0:
            raise ValidationError(f"learning rate must be > 0, got {self.lr}")

    def echo(self) -> dict:
        return {
            "task": self.task,
            "loss": self.loss,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "epochs": self.epochs,
            "folds": self.folds,
            "seed": self.seed,
            "model": self.model,
            "threshold": self.threshold,
            "positive_label": self.positive_label,
            "preprocess": self.apply_preprocess,
            "augment": self.apply_augment,
            "pipeline_stages": self.pipeline.stage_names() if self.apply_preprocess else [],
        }


@dataclass
class BenchmarkReport:
    """Per-fold metric rows plus the mean/std aggregate and run metadata."""

    config: dict
    metric_names: tuple[str, ...]
    folds: list[FoldSummary]
    aggregate: dict[str, tuple[float, float]]
    metadata: dict


def _aggregate(folds: list[FoldSummary], metric_names: Sequence[str]) -> dict[str, tuple[float, float]]:
    return {name: aggregate_folds([f.metrics[name] for f in folds]) for name in metric_names}


def _fold_seed(master_seed: int, fold: int) -> int:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(fold,))
    return int(seq.generate_state(1)[0])


def _max_workers() -> int:
    raw = os.environ.get("OTBENCH_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"OTBENCH_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def _run_folds(plan: FoldPlan, worker: Callable[[int], FoldSummary]) -> list[FoldSummary]:
    workers = min(_max_workers(), plan.k)
    if workers == 1:
        return [worker(fold) for fold in range(plan.k)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(plan.k)))


# ---------------------------------------------------------------------------
# input loading


def _load_input_plane(record: ManifestRecord, cfg: BenchmarkConfig) -> np.ndarray:
    if cfg.apply_preprocess:
        return preprocess(load_rgb(record.image_path), cfg.pipeline)
    return load_plane(record.image_path)


def _dataset_fingerprint(manifest: DatasetManifest) -> dict:
    return {"source": manifest.source, "records": len(manifest.records), "classes": manifest.class_counts()}


# ---------------------------------------------------------------------------
# classification benchmark

ClassifierPredictor = Callable[[np.ndarray, ManifestRecord], str]


def _fit_logistic_classifier(
    samples: list[tuple[np.ndarray, str]], cfg: BenchmarkConfig, seed: int
) -> ClassifierPredictor:
    model = train_image_classifier(samples, epochs=cfg.epochs, lr=cfg.lr, seed=seed, batch_size=cfg.batch_size)
    return lambda plane, record: predict_label(model, plane)[0]


def _fit_oracle_classifier(samples, cfg, seed) -> ClassifierPredictor:
    # test double: always answers with the ground-truth label
    return lambda plane, record: record.label


def _fit_majority_classifier(samples, cfg, seed) -> ClassifierPredictor:
    counts: dict[str, int] = {}
    for _, label in samples:
        counts[label] = counts.get(label, 0) + 1
    majority = max(sorted(counts), key=lambda c: counts[c])
    return lambda plane, record: majority


CLASSIFIER_FITTERS = {
    "logistic": _fit_logistic_classifier,
    "oracle": _fit_oracle_classifier,
    "majority": _fit_majority_classifier,
}


def run_classification_benchmark(cfg: BenchmarkConfig, manifest: DatasetManifest) -> BenchmarkReport:
    """Cross-validated image classification benchmark.

    Per fold: preprocess, augment the training split, fit the configured
    classifier with balanced batches and cross-entropy, then score
    accuracy/precision/recall/f1 on the untouched validation split.
    """
    if cfg.task != "classify":
        raise ValidationError(f"config task is {cfg.task!r}, expected 'classify'")
    if cfg.model not in CLASSIFIER_FITTERS:
        raise ValidationError(f"unknown classifier model {cfg.model!r}; choose from {sorted(CLASSIFIER_FITTERS)}")
    plan = stratified_kfold(manifest, cfg.folds, cfg.seed)
    planes = [_load_input_plane(rec, cfg) for rec in manifest.records]

    def run_fold(fold: int) -> FoldSummary:
        try:
            train_ids = plan.train_ids(fold)
            val_ids = plan.val_ids(fold)
            train_samples: list[tuple[np.ndarray, str]] = []
            for i in train_ids:
                label = manifest.records[i].label
                train_samples.append((planes[i], label))
                if cfg.apply_augment:
                    for derived in augment_pair(SamplePair(image=planes[i])):
                        train_samples.append((derived.image, label))
            predictor = CLASSIFIER_FITTERS[cfg.model](train_samples, cfg, _fold_seed(cfg.seed, fold))
            preds = [predictor(planes[i], manifest.records[i]) for i in val_ids]
            truths = [manifest.records[i].label for i in val_ids]
            values, degenerate = classification_metrics(
                confusion_counts(preds, truths, positive=cfg.positive_label)
            )
            return FoldSummary(
                fold=fold,
                metrics=values,
                degenerate=degenerate,
                extra={
                    "train_size": len(train_ids),
                    "train_size_augmented": len(train_samples),
                    "val_size": len(val_ids),
                },
            )
        except OtbenchError as exc:
            raise TrainingError(f"classification benchmark failed in fold {fold}: {exc}") from exc

    folds = _run_folds(plan, run_fold)
    return BenchmarkReport(
        config=cfg.echo(),
        metric_names=CLASSIFICATION_METRICS,
        folds=folds,
        aggregate=_aggregate(folds, CLASSIFICATION_METRICS),
        metadata={
            "code_version": __version__,
            "seed": cfg.seed,
            "folds": cfg.folds,
            "dataset": _dataset_fingerprint(manifest),
            "augmented_splits": "train" if cfg.apply_augment else "none",
        },
    )


# ---------------------------------------------------------------------------
# segmentation benchmark

SegmenterPredictor = Callable[[SamplePair], np.ndarray]


def _fit_logistic_segmenter(
    train: list[SamplePair], val: list[SamplePair], cfg: BenchmarkConfig, seed: int
) -> tuple[SegmenterPredictor, dict[str, int]]:
    model = train_pixel_segmenter(
        train,
        loss_kind=cfg.loss,
        epochs=cfg.epochs,
        lr=cfg.lr,
        seed=seed,
        batch_size=cfg.batch_size,
        threshold=cfg.threshold,
        val=val,
    )
    extra = {} if model.best_epoch is None else {"best_epoch": model.best_epoch}
    return (lambda pair: predict_mask(model, pair.image)), extra


def _fit_oracle_segmenter(train, val, cfg, seed) -> tuple[SegmenterPredictor, dict[str, int]]:
    # test double: echoes the ground-truth mask
    return (lambda pair: pair.mask.copy()), {}


SEGMENTER_FITTERS = {
    "logistic": _fit_logistic_segmenter,
    "oracle": _fit_oracle_segmenter,
}


def run_segmentation_benchmark(cfg: BenchmarkConfig, manifest: DatasetManifest) -> BenchmarkReport:
    """Cross-validated lesion segmentation benchmark.

    Every record must carry a mask (segmentation runs on the diseased
    subset). Per fold the segmenter is trained with the chosen overlap
    loss while validation Dice is tracked per epoch; the best epoch's
    parameters produce the reported pixel_accuracy/dice/iou, averaged
    over the validation images.
    """
    if cfg.task != "segment":
        raise ValidationError(f"config task is {cfg.task!r}, expected 'segment'")
    if cfg.model not in SEGMENTER_FITTERS:
        raise ValidationError(f"unknown segmenter model {cfg.model!r}; choose from {sorted(SEGMENTER_FITTERS)}")
    missing = [str(rec.image_path) for rec in manifest.records if rec.mask_path is None]
    if missing:
        raise ValidationError(f"segmentation benchmark: {len(missing)} records without masks (first: {missing[0]})")
    plan = stratified_kfold(manifest, cfg.folds, cfg.seed)
    pairs = [
        SamplePair(image=_load_input_plane(rec, cfg), mask=load_mask(rec.mask_path)) for rec in manifest.records
    ]

    def run_fold(fold: int) -> FoldSummary:
        try:
            train_ids = plan.train_ids(fold)
            val_ids = plan.val_ids(fold)
            train_pairs: list[SamplePair] = []
            for i in train_ids:
                train_pairs.append(pairs[i])
                if cfg.apply_augment:
                    for derived in augment_pair(pairs[i]):
                        train_pairs.append(SamplePair(image=derived.image, mask=derived.mask))
            val_pairs = [pairs[i] for i in val_ids]
            predictor, extra = SEGMENTER_FITTERS[cfg.model](train_pairs, val_pairs, cfg, _fold_seed(cfg.seed, fold))
            per_image = [segmentation_metrics(predictor(pair), pair.mask) for pair in val_pairs]
            values = {name: float(np.mean([m[name] for m in per_image])) for name in SEGMENTATION_METRICS}
            extra.update(
                {
                    "train_size": len(train_ids),
                    "train_size_augmented": len(train_pairs),
                    "val_size": len(val_ids),
                }
            )
            return FoldSummary(fold=fold, metrics=values, degenerate=(), extra=extra)
        except OtbenchError as exc:
            raise TrainingError(f"segmentation benchmark failed in fold {fold}: {exc}") from exc

    folds = _run_folds(plan, run_fold)
    return BenchmarkReport(
        config=cfg.echo(),
        metric_names=SEGMENTATION_METRICS,
        folds=folds,
        aggregate=_aggregate(folds, SEGMENTATION_METRICS),
        metadata={
            "code_version": __version__,
            "seed": cfg.seed,
            "folds": cfg.folds,
            "dataset": _dataset_fingerprint(manifest),
            "augmented_splits": "train" if cfg.apply_augment else "none",
        },
    )


# ---------------------------------------------------------------------------
# report emission


def report_to_json(report: BenchmarkReport) -> str:
    """Canonical JSON rendering, full float precision, stable key order."""
    doc = {
        "config": report.config,
        "metadata": report.metadata,
        "metrics": list(report.metric_names),
        "folds": [
            {
                "fold": f.fold,
                "metrics": {name: f.metrics[name] for name in report.metric_names},
                "degenerate": list(f.degenerate),
                "extra": dict(sorted(f.extra.items())),
            }
            for f in sorted(report.folds, key=lambda f: f.fold)
        ],
        "aggregate": {
            name: {"mean": report.aggregate[name][0], "std": report.aggregate[name][1]}
            for name in report.metric_names
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: BenchmarkReport) -> str:
    """CSV rendering: one block of k fold rows plus an avg row per metric,
    all values to three decimals."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "fold", "value", "std"])
    folds = sorted(report.folds, key=lambda f: f.fold)
    for name in report.metric_names:
        for f in folds:
            writer.writerow([name, f.fold + 1, f"{f.metrics[name]:.3f}", ""])
        mean, std = report.aggregate[name]
        writer.writerow([name, "avg", f"{mean:.3f}", f"{std:.3f}"])
    return buf.getvalue()


def emit_report(report: BenchmarkReport, format: str, path: str | Path) -> Path:
    """Serialize a report deterministically; equal reports give equal bytes."""
    if format not in ("json", "csv"):
        raise ValidationError(f"report format must be 'json' or 'csv', got {format!r}")
    text = report_to_json(report) if format == "json" else report_to_csv(report)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OtbenchError(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path: str | Path) -> BenchmarkReport:
    """Read back a JSON report written by emit_report."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"report file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"report file {path} is not valid JSON: {exc}") from exc
    folds = [
        FoldSummary(
            fold=int(f["fold"]),
            metrics={k: float(v) for k, v in f["metrics"].items()},
            degenerate=tuple(f.get("degenerate", ())),
            extra={k: int(v) for k, v in f.get("extra", {}).items()},
        )
        for f in doc["folds"]
    ]
    aggregate = {name: (float(v["mean"]), float(v["std"])) for name, v in doc["aggregate"].items()}
    return BenchmarkReport(
        config=doc.get("config", {}),
        metric_names=tuple(doc["metrics"]),
        folds=folds,
        aggregate=aggregate,
        metadata=doc.get("metadata", {}),
    )


def benchmark_from_manifest(cfg: BenchmarkConfig, manifest_path: str | Path) -> BenchmarkReport:
    """Load the manifest appropriate for the task and run the benchmark."""
    if cfg.task == "segment":
        manifest = load_manifest(manifest_path, segmentation=True).with_masks()
        if not manifest.records:
            raise ValidationError("segmentation benchmark: manifest has no records with masks")
        return run_segmentation_benchmark(cfg, manifest)
    manifest = load_manifest(manifest_path)
    return run_classification_benchmark(cfg, manifest)
