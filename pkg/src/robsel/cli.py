"""Command line interface.

Subcommands: ``robustness``, ``select``, ``tis``, ``corr``, ``seg-eval``,
``augment``, ``extract``.  Every command prints a JSON report to stdout
on success and nothing but a categorized error line on failure; ``--out``
additionally writes the report to a file, as CSV when ``--format csv``.
The environment variable ``ROBSEL_SEED`` overrides any seed from flags
or manifests.

Exit codes: 0 success, 2 usage, 3 manifest, 4 file format, 5 shape
mismatch, 6 degenerate input, 7 missing data, 1 other invalid input.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .augment import (
    JitterParams,
    color_jitter,
    imagenet_augment,
    resize_bilinear,
    rotated_crop_idrid,
)
from .encoder import load_encoder
from .errors import (
    DegenerateInputError,
    FileFormatError,
    ManifestError,
    MissingDataError,
    RobselError,
    ShapeMismatchError,
)
from .manifest import (
    AUGMENT_SCHEMA,
    EXTRACT_SCHEMA,
    REPORT_SCHEMA,
    SEGEVAL_SCHEMA,
    RunManifest,
    config_as_dict,
    load_manifest,
    load_report,
    report_to_csv,
    report_to_json,
)
from .metrics import (
    RobustnessConfig,
    TripletSet,
    augment_pairs,
    build_triplets,
    negative_permutation,
    pool_or_flatten,
    robustness,
)
from .prng import PrngStream, compose_stream_id
from .segeval import (
    binarize,
    confusion,
    dice_index,
    dice_loss,
    dice_per_class,
    jaccard_index,
    jaccard_per_class,
    mcc,
    mcc_per_class,
    spearman,
)
from .selection import CheckpointSeries, select_offline, select_online, tis
from .tensorfile import read_tensor, write_tensor

SEED_ENV_VAR = "ROBSEL_SEED"

_ROLE_CLI_AUGMENT = 401

_LEVEL_FLAGS = {"last": "last", "second-to-last": "second_to_last"}


def _effective_seed(flag_seed, fallback) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ManifestError(f"{SEED_ENV_VAR}={env!r} is not an integer") from exc
    if flag_seed is not None:
        return int(flag_seed)
    return int(fallback)


def _load_image(path) -> np.ndarray:
    arr = read_tensor(path)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.float32:
        raise FileFormatError(
            f"{path}: expected a float32 (H, W, 3) image tensor, got "
            f"{arr.dtype} {arr.shape}"
        )
    img = arr.astype(np.float64)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{path}: image values must lie in [0, 1]")
    return img


def _load_mask(path) -> np.ndarray:
    arr = read_tensor(path)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise FileFormatError(
            f"{path}: expected a uint8 (H, W) mask tensor, got {arr.dtype} {arr.shape}"
        )
    return arr.astype(np.int64)


# ---------------------------------------------------------------------------
# robustness
# ---------------------------------------------------------------------------


def _embeddings_to_triplets(
    path, cfg: RobustnessConfig, seed: int, expected_n: int | None
) -> TripletSet:
    arr = read_tensor(path)
    if arr.ndim == 3:
        queries = arr[:, 0].astype(np.float64)
        keys = arr[:, 1].astype(np.float64)
    elif arr.ndim == 5:
        queries = np.stack([pool_or_flatten(m, cfg.pooled) for m in arr[:, 0]])
        keys = np.stack([pool_or_flatten(m, cfg.pooled) for m in arr[:, 1]])
    else:
        raise FileFormatError(
            f"{path}: embeddings must be (n, 2, dim) vectors or (n, 2, C, H, W) "
            f"feature maps, got shape {arr.shape}"
        )
    if arr.shape[1] != 2:
        raise FileFormatError(
            f"{path}: second axis must hold the (query, key) pair, got {arr.shape[1]}"
        )
    n = arr.shape[0]
    if expected_n is not None and n != expected_n:
        raise ManifestError(
            f"{path}: holds {n} image entries but the run covers {expected_n} images"
        )
    successor = negative_permutation(n, seed)
    return TripletSet(queries, keys, keys[successor])


def _score_checkpoints(manifest: RunManifest, seed: int) -> list[dict]:
    images = [_load_image(p) for p in manifest.images]
    expected_n = len(images) if images else None
    rows = []
    for ck in manifest.checkpoints:
        try:
            if ck.kind == "weights":
                encoder = load_encoder(ck.path, ck.id)
                triplets = build_triplets(images, encoder, manifest.config, seed)
            else:
                triplets = _embeddings_to_triplets(
                    ck.path, manifest.config, seed, expected_n
                )
        except MissingDataError as exc:
            raise MissingDataError(f"checkpoint {ck.id!r}: {exc}") from exc
        row = {"id": ck.id, "epoch": ck.epoch, "random_init": ck.random_init}
        row["robustness"] = robustness(triplets, manifest.config)
        if ck.downstream is not None:
            row["downstream"] = ck.downstream
        rows.append(row)
    return rows


def _cmd_robustness(args) -> dict:
    manifest = load_manifest(args.manifest)
    seed = _effective_seed(args.seed, manifest.seed)
    rows = _score_checkpoints(manifest, seed)
    return {
        "schema": REPORT_SCHEMA,
        "seed": seed,
        "config": config_as_dict(manifest.config),
        "checkpoints": rows,
    }


# ---------------------------------------------------------------------------
# select / tis / corr (report consumers)
# ---------------------------------------------------------------------------


def _series_from_rows(rows) -> CheckpointSeries:
    downstream = [row.get("downstream") for row in rows]
    has_all = all(d is not None for d in downstream)
    return CheckpointSeries(
        epochs=tuple(row["epoch"] for row in rows),
        robustness=tuple(row["robustness"] for row in rows),
        downstream=tuple(downstream) if has_all else None,
        includes_random_init=bool(rows and rows[0].get("random_init", False)),
    )


def _epoch_to_id(rows, epoch: int) -> str:
    for row in rows:
        if row["epoch"] == epoch:
            return row["id"]
    raise MissingDataError(f"no checkpoint row with epoch {epoch}")


def _cmd_select(args) -> dict:
    report = load_report(args.report)
    rows = report["checkpoints"]
    series = _series_from_rows(rows)
    if args.mode == "offline":
        result = select_offline(series, include_random_init=args.include_random_init)
    else:
        result = select_online(series.iter_candidates())
    block = {
        "chosen_id": _epoch_to_id(rows, result.chosen_epoch),
        "chosen_epoch": result.chosen_epoch,
        "evaluated_count": result.evaluated_count,
    }
    report.setdefault("selection", {})[args.mode] = block
    return report


def _require_downstream(rows) -> None:
    for row in rows:
        if row.get("downstream") is None:
            raise MissingDataError(
                f"checkpoint {row['id']!r} has no downstream score; tis/corr need one"
            )


def _cmd_tis(args) -> dict:
    report = load_report(args.report)
    rows = report["checkpoints"]
    _require_downstream(rows)
    series = _series_from_rows(rows)
    # indicator argmax disregards the random init; the denominator is the
    # best downstream score over the whole grid, random init included
    chosen = select_offline(series)
    numerator = next(r["downstream"] for r in rows if r["epoch"] == chosen.chosen_epoch)
    denominator = max(r["downstream"] for r in rows)
    if denominator <= 0:
        raise ValueError("downstream scores must be positive")
    report["tis"] = numerator / denominator
    return report


def _cmd_corr(args) -> dict:
    report = load_report(args.report)
    rows = [r for r in report["checkpoints"] if not r.get("random_init", False)]
    scored = [r for r in rows if r.get("downstream") is not None]
    if len(scored) < 2:
        raise MissingDataError(
            "need at least 2 non-random checkpoints with downstream scores"
        )
    rho = spearman(
        [r["robustness"] for r in scored], [r["downstream"] for r in scored]
    )
    report["spearman_robustness_downstream"] = rho
    return report


# ---------------------------------------------------------------------------
# seg-eval
# ---------------------------------------------------------------------------


def _cmd_seg_eval(args) -> dict:
    if len(args.pred) != len(args.mask):
        raise ShapeMismatchError(
            f"{len(args.pred)} prediction files but {len(args.mask)} mask files"
        )
    masks = np.stack([_load_mask(p) for p in args.mask])
    preds = []
    for path in args.pred:
        arr = read_tensor(path)
        if arr.dtype != np.float32:
            raise FileFormatError(f"{path}: predictions must be float32, got {arr.dtype}")
        expected_ndim = 2 if args.task == "binary" else 3
        if arr.ndim != expected_ndim:
            raise FileFormatError(
                f"{path}: {args.task} prediction must be {expected_ndim}-D, got {arr.shape}"
            )
        preds.append(arr.astype(np.float64))
    probs = np.stack(preds)
    num_classes = 2 if args.task == "binary" else probs.shape[-1]
    labels = binarize(probs, args.task)
    counts = confusion(labels, masks, num_classes=num_classes)
    return {
        "schema": SEGEVAL_SCHEMA,
        "task": args.task,
        "num_images": int(probs.shape[0]),
        "metrics": {
            "dice": dice_index(counts, args.task),
            "jaccard": jaccard_index(counts, args.task),
            "mcc": mcc(counts, args.task),
            "dice_loss": dice_loss(probs, masks, args.task),
        },
        "per_class": {
            "dice": list(dice_per_class(counts)),
            "jaccard": list(jaccard_per_class(counts)),
            "mcc": list(mcc_per_class(counts)),
        },
    }


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


def _one_hot(index: int, classes: int) -> np.ndarray:
    lab = np.zeros(classes, dtype=np.float64)
    lab[index % classes] = 1.0
    return lab


def _cmd_augment(args) -> dict:
    images = [_load_image(p) for p in args.images]
    masks = None
    if args.mask:
        if len(args.mask) != len(images):
            raise ShapeMismatchError(
                f"{len(args.mask)} mask files but {len(images)} images"
            )
        masks = [_load_mask(p) for p in args.mask]
    if args.pipeline == "imagenet-advanced" and len(images) < 2:
        raise ValueError("imagenet-advanced needs at least 2 images to sample pairs")

    seed = _effective_seed(args.seed, 0)
    out_dir = Path(args.out_dir)
    results = []
    for i, img in enumerate(images):
        rng = PrngStream(seed, compose_stream_id(_ROLE_CLI_AUGMENT, i))
        entry = {"input": str(args.images[i])}
        out_mask = None
        if args.pipeline == "colorjitter":
            out_img = color_jitter(img, JitterParams(), rng)
        elif args.pipeline == "idrid":
            mask = masks[i] if masks else np.zeros(img.shape[:2], dtype=np.int64)
            out_img, out_mask = rotated_crop_idrid(img, mask, rng)
        else:
            mode = "simple" if args.pipeline == "imagenet-simple" else "advanced"
            label = _one_hot(i, args.classes)

            def provider(stream, _images=images, _classes=args.classes):
                j = stream.randint(len(_images))
                paired = np.clip(resize_bilinear(_images[j], (224, 224)), 0.0, 1.0)
                return paired, _one_hot(j, _classes)

            out_img, out_label = imagenet_augment(
                img, label, mode, rng,
                pair_provider=provider if mode == "advanced" else None,
            )
            entry["label"] = list(out_label)
        entry["image"] = f"aug_{i:03d}.ptns"
        if out_mask is not None and masks is not None:
            entry["mask"] = f"aug_mask_{i:03d}.ptns"
        results.append((entry, out_img, out_mask if masks is not None else None))

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry, out_img, out_mask in results:
        write_tensor(out_dir / entry["image"], out_img.astype(np.float32))
        if out_mask is not None:
            write_tensor(out_dir / entry["mask"], out_mask.astype(np.uint8))
        rows.append(entry)
    return {
        "schema": AUGMENT_SCHEMA,
        "pipeline": args.pipeline,
        "seed": seed,
        "out_dir": str(out_dir),
        "outputs": rows,
    }


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def _cmd_extract(args) -> dict:
    level = _LEVEL_FLAGS[args.level]
    encoder = load_encoder(args.weights)
    images = [_load_image(p) for p in args.images]
    if len(images) < 2:
        raise ValueError("extract needs at least 2 images (robustness pairs negatives)")
    seed = _effective_seed(args.seed, 0)
    per_image = []
    for query_img, key_img in augment_pairs(images, seed):
        query_map = encoder.forward(query_img, level)
        key_map = encoder.forward(key_img, level)
        if args.pooled:
            per_image.append(
                [pool_or_flatten(query_map, True), pool_or_flatten(key_map, True)]
            )
        else:
            per_image.append([query_map, key_map])
    stacked = np.asarray(per_image, dtype=np.float32)
    out_path = Path(args.out_tensor)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_tensor(out_path, stacked)
    return {
        "schema": EXTRACT_SCHEMA,
        "weights": str(args.weights),
        "level": level,
        "pooled": args.pooled,
        "seed": seed,
        "shape": list(stacked.shape),
        "out_tensor": str(out_path),
    }


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def _add_output_flags(sub) -> None:
    sub.add_argument("--out", type=Path, default=None, help="write the report here")
    sub.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="payload format for --out (stdout always shows JSON)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robsel",
        description="Score encoder checkpoints by representation robustness, "
        "select the best one, and evaluate segmentation outputs.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("robustness", help="score every checkpoint in a manifest")
    sub.add_argument("--manifest", type=Path, required=True)
    sub.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    _add_output_flags(sub)

    sub = commands.add_parser("select", help="choose a checkpoint from a report")
    sub.add_argument("--report", type=Path, required=True)
    sub.add_argument("--mode", choices=("offline", "online"), required=True)
    sub.add_argument(
        "--include-random-init", action="store_true",
        help="let offline selection consider the random init entry",
    )
    _add_output_flags(sub)

    sub = commands.add_parser("tis", help="transferability indicator score of a report")
    sub.add_argument("--report", type=Path, required=True)
    _add_output_flags(sub)

    sub = commands.add_parser(
        "corr", help="Spearman correlation of robustness and downstream scores"
    )
    sub.add_argument("--report", type=Path, required=True)
    _add_output_flags(sub)

    sub = commands.add_parser("seg-eval", help="segmentation metric suite")
    sub.add_argument("--task", choices=("binary", "multiclass"), required=True)
    sub.add_argument("--pred", type=Path, nargs="+", required=True)
    sub.add_argument("--mask", type=Path, nargs="+", required=True)
    _add_output_flags(sub)

    sub = commands.add_parser("augment", help="run an augmentation pipeline on images")
    sub.add_argument(
        "--pipeline",
        choices=("colorjitter", "idrid", "imagenet-simple", "imagenet-advanced"),
        required=True,
    )
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out-dir", type=Path, required=True)
    sub.add_argument("--mask", type=Path, nargs="*", default=[])
    sub.add_argument("--classes", type=int, default=10, help="label classes for imagenet modes")
    sub.add_argument("images", type=Path, nargs="+")
    _add_output_flags(sub)

    sub = commands.add_parser("extract", help="embed images with saved encoder weights")
    sub.add_argument("--weights", type=Path, required=True)
    sub.add_argument("--level", choices=tuple(_LEVEL_FLAGS), default="second-to-last")
    pooled = sub.add_mutually_exclusive_group()
    pooled.add_argument("--pooled", dest="pooled", action="store_true", default=True)
    pooled.add_argument("--no-pooled", dest="pooled", action="store_false")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out-tensor", type=Path, required=True)
    sub.add_argument("images", type=Path, nargs="+")
    _add_output_flags(sub)

    return parser


_HANDLERS = {
    "robustness": _cmd_robustness,
    "select": _cmd_select,
    "tis": _cmd_tis,
    "corr": _cmd_corr,
    "seg-eval": _cmd_seg_eval,
    "augment": _cmd_augment,
    "extract": _cmd_extract,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.format == "csv" and args.out is None:
            raise ValueError("--format csv requires --out")
        report = _HANDLERS[args.command](args)
    except ManifestError as exc:
        return _fail("manifest", 3, exc)
    except FileFormatError as exc:
        return _fail("file-format", 4, exc)
    except ShapeMismatchError as exc:
        return _fail("shape", 5, exc)
    except DegenerateInputError as exc:
        return _fail("degenerate-input", 6, exc)
    except MissingDataError as exc:
        return _fail("missing-data", 7, exc)
    except (ValueError, RobselError) as exc:
        return _fail("invalid-input", 1, exc)
    text = report_to_json(report)
    sys.stdout.write(text)
    if args.out is not None:
        payload = report_to_csv(report) if args.format == "csv" else text
        Path(args.out).write_text(payload)
    return 0


def _fail(category: str, code: int, exc: Exception) -> int:
    print(f"error[{category}]: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
