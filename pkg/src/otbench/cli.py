"""Command-line interface.

Subcommands: preprocess, augment, split, benchmark classify,
benchmark segment, evaluate, report. Exit codes: 0 success,
2 validation error, 3 runtime/training error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .augment import SamplePair, TAG_SUFFIXES, augment_pair
from .data import ManifestRecord, load_manifest, write_manifest
from .errors import OtbenchError, ValidationError
from .harness import (
    BenchmarkConfig,
    benchmark_from_manifest,
    emit_report,
    load_report,
    report_to_csv,
    report_to_json,
    stratified_kfold,
)
from .image import load_auto, load_mask, load_rgb, save_mask, save_plane, save_rgb
from .imgproc import ClaheParams, NlmdParams, PipelineConfig, preprocess_stages
from .metrics import classification_metrics, confusion_counts, segmentation_metrics, aggregate_folds

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--out", type=Path, default=None, help="output file or directory")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="report format")


def _pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--denoiser", choices=("gaussian", "nlmd"), default="gaussian")
    parser.add_argument("--normalizer", choices=("max", "gaussian"), default="max")
    parser.add_argument("--mean-window", type=int, default=51)
    parser.add_argument("--gaussian-window", type=int, default=51)
    parser.add_argument("--gaussian-sigma", type=float, default=None)
    parser.add_argument("--clahe-clip", type=float, default=2.0, help="clip as multiple of the uniform bin height")
    parser.add_argument("--clahe-grid", type=int, nargs=2, default=(8, 8), metavar=("ROWS", "COLS"))
    parser.add_argument("--clahe-bins", type=int, default=256)
    parser.add_argument("--nlmd-search", type=int, default=10)
    parser.add_argument("--nlmd-patch", type=int, default=3)
    parser.add_argument("--nlmd-h", type=float, default=0.1)


def _pipeline_from_args(args: argparse.Namespace) -> PipelineConfig:
    clip = math.inf if args.clahe_clip <= 0 else args.clahe_clip
    return PipelineConfig(
        mean_window=args.mean_window,
        denoiser=args.denoiser,
        gaussian_window=args.gaussian_window,
        gaussian_sigma=args.gaussian_sigma,
        normalizer=args.normalizer,
        clahe=ClaheParams(clip_limit=clip, tile_grid=tuple(args.clahe_grid), bins=args.clahe_bins),
        nlmd=NlmdParams(search_radius=args.nlmd_search, patch_radius=args.nlmd_patch, h=args.nlmd_h),
    )


def _benchmark_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", type=Path, required=True, help="dataset manifest CSV")
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--loss", choices=("dice", "jaccard"), default="jaccard")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=0.0001)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--threshold", type=float, default=0.5)
    parser.add_argument("--model", choices=("logistic", "oracle", "majority"), default="logistic")
    parser.add_argument("--no-preprocess", action="store_true", help="feed images to the model without the pipeline")
    parser.add_argument("--no-augment", action="store_true", help="skip training-split augmentation")
    _pipeline_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"otbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_pre = sub.add_parser("preprocess", help="run the preprocessing pipeline over images")
    p_pre.add_argument("--input", type=Path, required=True, nargs="+", help="image files or directories")
    _pipeline_flags(p_pre)
    _common_flags(p_pre)

    p_aug = sub.add_parser("augment", help="derive tagged augmentations beside the originals")
    p_aug.add_argument("--manifest", type=Path, required=True)
    p_aug.add_argument("--zoom", action="store_true", help="also emit the ablation-only center-crop variant")
    _common_flags(p_aug)

    p_split = sub.add_parser("split", help="write a stratified fold plan for a manifest")
    p_split.add_argument("--manifest", type=Path, required=True)
    p_split.add_argument("--folds", type=int, default=5)
    _common_flags(p_split)

    p_bench = sub.add_parser("benchmark", help="run a cross-validated benchmark")
    bench_sub = p_bench.add_subparsers(dest="task", required=True)
    for task in ("classify", "segment"):
        p_task = bench_sub.add_parser(task)
        _benchmark_flags(p_task)
        _common_flags(p_task)

    p_eval = sub.add_parser("evaluate", help="score existing predictions")
    eval_sub = p_eval.add_subparsers(dest="what", required=True)
    p_labels = eval_sub.add_parser("labels", help="CSV with header prediction,truth")
    p_labels.add_argument("--pairs", type=Path, required=True)
    p_labels.add_argument("--positive", default="diseased")
    _common_flags(p_labels)
    p_masks = eval_sub.add_parser("masks", help="CSV with header pred_mask,truth_mask")
    p_masks.add_argument("--pairs", type=Path, required=True)
    _common_flags(p_masks)

    p_rep = sub.add_parser("report", help="re-render a JSON benchmark report")
    p_rep.add_argument("--input", type=Path, required=True)
    _common_flags(p_rep)
    return parser


# ---------------------------------------------------------------------------
# subcommand implementations


def _iter_images(inputs: list[Path]) -> list[Path]:
    files: list[Path] = []
    for item in inputs:
        if item.is_dir():
            files.extend(sorted(p for p in item.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS))
        elif item.is_file():
            files.append(item)
        else:
            raise ValidationError(f"input not found: {item}")
    if not files:
        raise ValidationError("no input images found")
    return files


def cmd_preprocess(args: argparse.Namespace) -> int:
    cfg = _pipeline_from_args(args)
    out_dir = args.out if args.out is not None else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for src in _iter_images(args.input):
        stages = preprocess_stages(load_rgb(src), cfg)
        dst = out_dir / f"{src.stem}_pre.png"
        save_plane(stages[-1][1], dst)
        written.append({"input": str(src), "output": dst.name})
        print(f"wrote {dst}")
    meta = {
        "stages": cfg.stage_names(),
        "denoiser": cfg.denoiser,
        "normalizer": cfg.normalizer,
        "mean_window": cfg.mean_window,
        "gaussian_window": cfg.gaussian_window,
        "gaussian_sigma": cfg.sigma,
        "clahe": {"clip_limit": cfg.clahe.clip_limit, "tile_grid": list(cfg.clahe.tile_grid), "bins": cfg.clahe.bins},
        "nlmd": {"search_radius": cfg.nlmd.search_radius, "patch_radius": cfg.nlmd.patch_radius, "h": cfg.nlmd.h},
        "images": written,
    }
    meta_path = out_dir / "preprocess_run.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    print(f"wrote {meta_path}")
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    records: list[ManifestRecord] = list(manifest.records)
    for rec in manifest.records:
        image = load_auto(rec.image_path)
        mask = load_mask(rec.mask_path) if rec.mask_path is not None else None
        for derived in augment_pair(SamplePair(image=image, mask=mask), include_zoom=args.zoom):
            suffix = TAG_SUFFIXES[derived.tag]
            img_path = rec.image_path.with_name(f"{rec.image_path.stem}{suffix}.png")
            if derived.image.ndim == 3:
                save_rgb(derived.image, img_path)
            else:
                save_plane(derived.image, img_path)
            mask_path = None
            if derived.mask is not None and rec.mask_path is not None:
                mask_path = rec.mask_path.with_name(f"{rec.mask_path.stem}{suffix}.png")
                save_mask(derived.mask, mask_path)
            records.append(
                ManifestRecord(
                    image_path=img_path, label=rec.label, lesion_type=rec.lesion_type, mask_path=mask_path
                )
            )
    out = args.out if args.out is not None else args.manifest.with_name(f"{args.manifest.stem}_augmented.csv")
    write_manifest(records, out)
    print(f"wrote {out} ({len(records)} records, {len(manifest.records)} originals)")
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    manifest = load_manifest(args.manifest)
    plan = stratified_kfold(manifest, args.folds, args.seed)
    base = Path(manifest.source).parent
    assignment = {
        os.path.relpath(rec.image_path, base): fold
        for rec, fold in zip(manifest.records, plan.assignment)
    }
    doc = {"seed": plan.seed, "folds": plan.k, "assignment": assignment}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg = BenchmarkConfig(
        task=args.task,
        loss=args.loss,
        batch_size=args.batch_size,
        lr=args.lr,
        epochs=args.epochs,
        folds=args.folds,
        seed=args.seed,
        model=args.model,
        threshold=args.threshold,
        apply_preprocess=not args.no_preprocess,
        apply_augment=not args.no_augment,
        pipeline=_pipeline_from_args(args),
    )
    report = benchmark_from_manifest(cfg, args.manifest)
    for summary in report.folds:
        row = "  ".join(f"{name}={summary.metrics[name]:.3f}" for name in report.metric_names)
        print(f"fold {summary.fold + 1}: {row}")
    agg = "  ".join(
        f"{name}={report.aggregate[name][0]:.3f}+/-{report.aggregate[name][1]:.3f}" for name in report.metric_names
    )
    print(f"avg: {agg}")
    if args.out is not None:
        emit_report(report, args.format, args.out)
        print(f"wrote {args.out}")
    else:
        text = report_to_json(report) if args.format == "json" else report_to_csv(report)
        print(text, end="")
    return 0


def _read_pair_csv(path: Path, expected_header: tuple[str, str]) -> list[tuple[str, str]]:
    try:
        lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    except FileNotFoundError:
        raise ValidationError(f"pairs file not found: {path}") from None
    if not lines or tuple(s.strip() for s in lines[0].split(",")) != expected_header:
        raise ValidationError(f"pairs file {path} must start with header {','.join(expected_header)!r}")
    pairs = []
    for row_no, line in enumerate(lines[1:], start=2):
        fields = [s.strip() for s in line.split(",")]
        if len(fields) != 2:
            raise ValidationError(f"pairs file row {row_no}: expected 2 fields, got {len(fields)}")
        pairs.append((fields[0], fields[1]))
    if not pairs:
        raise ValidationError(f"pairs file {path} has no data rows")
    return pairs


def _emit_simple(doc: dict, csv_rows: list[list[str]], args: argparse.Namespace) -> None:
    if args.format == "json":
        text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        text = "\n".join(",".join(row) for row in csv_rows) + "\n"
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")


def cmd_evaluate_labels(args: argparse.Namespace) -> int:
    pairs = _read_pair_csv(args.pairs, ("prediction", "truth"))
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    counts = confusion_counts(pred, truth, positive=args.positive)
    values, degenerate = classification_metrics(counts)
    doc = {
        "positive": args.positive,
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "metrics": values,
        "degenerate": list(degenerate),
    }
    rows = [["metric", "value"]] + [[name, f"{values[name]:.3f}"] for name in ("accuracy", "precision", "recall", "f1")]
    _emit_simple(doc, rows, args)
    return 0


def cmd_evaluate_masks(args: argparse.Namespace) -> int:
    pairs = _read_pair_csv(args.pairs, ("pred_mask", "truth_mask"))
    base = args.pairs.parent
    per_pair = []
    for pred_s, truth_s in pairs:
        pred = load_mask(base / pred_s if not os.path.isabs(pred_s) else pred_s)
        truth = load_mask(base / truth_s if not os.path.isabs(truth_s) else truth_s)
        per_pair.append(segmentation_metrics(pred, truth))
    names = ("pixel_accuracy", "dice", "iou")
    aggregate = {name: aggregate_folds([m[name] for m in per_pair]) for name in names}
    doc = {
        "pairs": [{"index": i, **m} for i, m in enumerate(per_pair)],
        "aggregate": {name: {"mean": aggregate[name][0], "std": aggregate[name][1]} for name in names},
    }
    rows = [["index"] + list(names)]
    for i, m in enumerate(per_pair):
        rows.append([str(i)] + [f"{m[name]:.3f}" for name in names])
    rows.append(["avg"] + [f"{aggregate[name][0]:.3f}" for name in names])
    rows.append(["std"] + [f"{aggregate[name][1]:.3f}" for name in names])
    _emit_simple(doc, rows, args)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.input)
    text = report_to_json(report) if args.format == "json" else report_to_csv(report)
    if args.out is not None:
        args.out.write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "preprocess":
            return cmd_preprocess(args)
        if args.command == "augment":
            return cmd_augment(args)
        if args.command == "split":
            return cmd_split(args)
        if args.command == "benchmark":
            return cmd_benchmark(args)
        if args.command == "evaluate":
            return cmd_evaluate_labels(args) if args.what == "labels" else cmd_evaluate_masks(args)
        if args.command == "report":
            return cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OtbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
