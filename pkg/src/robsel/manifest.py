"""Run manifests, reports, and their serialization.

A manifest is the JSON control plane of a run: the robustness config,
the master seed, the image list, and one entry per checkpoint pointing
at either a weights directory or a precomputed embeddings tensor.
Reports are plain dicts with a fixed key layout; serialization is
canonical (stable key order, trailing newline) so a repeated run yields
byte-identical output.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError
from .metrics import RobustnessConfig

REPORT_SCHEMA = "robsel-report-v1"
SEGEVAL_SCHEMA = "robsel-segeval-v1"
AUGMENT_SCHEMA = "robsel-augment-v1"
EXTRACT_SCHEMA = "robsel-extract-v1"

CHECKPOINT_KINDS = ("weights", "embeddings")


@dataclass(frozen=True)
class CheckpointSpec:
    id: str
    epoch: int
    kind: str
    path: Path
    random_init: bool = False
    downstream: float | None = None


@dataclass(frozen=True)
class RunManifest:
    seed: int
    config: RobustnessConfig
    images: tuple[Path, ...]
    checkpoints: tuple[CheckpointSpec, ...]

    @property
    def random_init_present(self) -> bool:
        return any(ck.random_init for ck in self.checkpoints)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ManifestError(message)


def load_manifest(path) -> RunManifest:
    """Parse and validate a manifest; paths resolve relative to its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    base = path.parent

    _require(isinstance(raw, dict), f"{path}: manifest must be a JSON object")
    for key in ("seed", "config", "checkpoints"):
        _require(key in raw, f"{path}: missing required key {key!r}")

    cfg_raw = raw["config"]
    _require(isinstance(cfg_raw, dict), f"{path}: config must be an object")
    try:
        config = RobustnessConfig(
            distance=cfg_raw.get("distance", "cosine"),
            margin=cfg_raw.get("margin", 0.5),
            level=cfg_raw.get("level", "second_to_last"),
            pooled=bool(cfg_raw.get("pooled", True)),
        )
    except ValueError as exc:
        raise ManifestError(f"{path}: bad config ({exc})") from exc

    images = []
    for entry in raw.get("images", []):
        img_path = base / entry
        _require(img_path.exists(), f"{path}: image file {entry!r} does not exist")
        images.append(img_path)

    checkpoints = []
    seen_ids = set()
    for i, ck in enumerate(raw["checkpoints"]):
        _require(isinstance(ck, dict), f"{path}: checkpoint {i} must be an object")
        for key in ("id", "epoch", "kind", "path"):
            _require(key in ck, f"{path}: checkpoint {i} missing key {key!r}")
        _require(
            ck["kind"] in CHECKPOINT_KINDS,
            f"{path}: checkpoint {ck['id']!r} has unknown kind {ck['kind']!r}",
        )
        _require(
            ck["id"] not in seen_ids, f"{path}: duplicate checkpoint id {ck['id']!r}"
        )
        seen_ids.add(ck["id"])
        ck_path = base / ck["path"]
        _require(
            ck_path.exists(),
            f"{path}: checkpoint {ck['id']!r} path {ck['path']!r} does not exist",
        )
        downstream = ck.get("downstream")
        checkpoints.append(
            CheckpointSpec(
                id=str(ck["id"]),
                epoch=int(ck["epoch"]),
                kind=ck["kind"],
                path=ck_path,
                random_init=bool(ck.get("random_init", False)),
                downstream=None if downstream is None else float(downstream),
            )
        )
    _require(len(checkpoints) > 0, f"{path}: no checkpoints")
    epochs = [ck.epoch for ck in checkpoints]
    _require(
        all(b > a for a, b in zip(epochs, epochs[1:])),
        f"{path}: checkpoint epochs must be strictly increasing, got {epochs}",
    )
    flagged = [i for i, ck in enumerate(checkpoints) if ck.random_init]
    _require(
        len(flagged) <= 1, f"{path}: at most one checkpoint may be flagged random_init"
    )
    _require(
        not flagged or flagged == [0],
        f"{path}: only the first checkpoint may be flagged random_init",
    )
    if any(ck.kind == "weights" for ck in checkpoints):
        _require(
            len(images) >= 2,
            f"{path}: weights checkpoints need at least 2 images to score",
        )

    return RunManifest(
        seed=int(raw["seed"]),
        config=config,
        images=tuple(images),
        checkpoints=tuple(checkpoints),
    )


def config_as_dict(config: RobustnessConfig) -> dict:
    return {
        "distance": config.distance,
        "margin": config.margin,
        "level": config.level,
        "pooled": config.pooled,
    }


def report_to_json(report: dict) -> str:
    """Canonical report serialization: 2-space indent, trailing newline."""
    return json.dumps(report, indent=2) + "\n"


def load_report(path) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text())
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    if report.get("schema") != REPORT_SCHEMA:
        raise ManifestError(
            f"{path}: expected a {REPORT_SCHEMA} report, got {report.get('schema')!r}"
        )
    return report


def report_to_csv(report: dict) -> str:
    """Tabular view of a report: one row per checkpoint, or key/value pairs."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if "checkpoints" in report:
        writer.writerow(["id", "epoch", "random_init", "robustness", "downstream"])
        for row in report["checkpoints"]:
            writer.writerow(
                [
                    row["id"],
                    row["epoch"],
                    int(bool(row.get("random_init", False))),
                    row.get("robustness", ""),
                    row.get("downstream", ""),
                ]
            )
    elif "metrics" in report:
        writer.writerow(["metric", "value"])
        for name, value in report["metrics"].items():
            writer.writerow([name, value])
    else:
        writer.writerow(["key", "value"])
        for name, value in report.items():
            if not isinstance(value, (dict, list)):
                writer.writerow([name, value])
    return buffer.getvalue()
