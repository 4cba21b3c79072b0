"""Synthetic end-to-end fixtures: images, checkpoint weights, manifests.

Everything here is deterministic in the master seed.  The images are
smooth, strongly hued fields (a dominant hue per image plus low
frequency saturation and value waves), which gives the robustness score
a wide dynamic range to discriminate over; the checkpoints come from
:func:`robsel.encoder.synthesize_checkpoints`.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .augment import hsv_to_rgb
from .encoder import DEFAULT_EPOCH_GRID, save_encoder, synthesize_checkpoints
from .metrics import RobustnessConfig
from .prng import PrngStream, compose_stream_id
from .tensorfile import write_tensor

_ROLE_IMAGE = 901

DOWNSTREAM_PEAK_ALPHA = 0.35


def make_images(seed: int, count: int, size: int = 16) -> list[np.ndarray]:
    """Hue-diverse smooth test images, (size, size, 3) float in [0, 1]."""
    images = []
    for i in range(count):
        rng = PrngStream(int(seed), compose_stream_id(_ROLE_IMAGE, i))
        y = np.arange(size)[:, None] / size
        x = np.arange(size)[None, :] / size
        hue0 = rng.uniform(0.0, 1.0)
        hue_amp = rng.uniform(0.05, 0.15)
        fy = rng.uniform(0.5, 2.0)
        fx = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        field = np.sin(2.0 * math.pi * (fy * y + fx * x) + phase)
        hue = (hue0 + hue_amp * field) % 1.0
        sat = np.clip(rng.uniform(0.55, 0.8) + 0.15 * field, 0.0, 1.0)
        v_fy = rng.uniform(0.5, 2.0)
        v_fx = rng.uniform(0.5, 2.0)
        v_phase = rng.uniform(0.0, 2.0 * math.pi)
        val = np.clip(
            rng.uniform(0.45, 0.7)
            + 0.2 * np.sin(2.0 * math.pi * (v_fy * y - v_fx * x) + v_phase),
            0.05,
            0.95,
        )
        rgb = hsv_to_rgb(np.stack([hue, sat, val], axis=-1))
        images.append(np.clip(rgb, 0.0, 1.0))
    return images


def demo_downstream_scores(epochs) -> list[float]:
    """A plausible downstream (Dice-like) curve over the epoch grid.

    Peaks near a third of full pretraining, echoing the shape of the
    synthesized robustness trajectory without duplicating it exactly.
    """
    top = max(epochs)
    scores = []
    for epoch in epochs:
        alpha = epoch / top
        bump = math.exp(-(((alpha - DOWNSTREAM_PEAK_ALPHA) / 0.3) ** 2))
        scores.append(round(0.55 + 0.35 * bump, 6))
    return scores


def write_fixture(
    root,
    seed: int = 20240601,
    n_images: int = 8,
    image_size: int = 16,
    epochs=DEFAULT_EPOCH_GRID,
    config: RobustnessConfig = RobustnessConfig(),
    with_downstream: bool = True,
) -> Path:
    """Materialize a complete runnable fixture under ``root``.

    Writes portable-tensor images, one weights directory per synthesized
    checkpoint, and ``manifest.json``.  Returns the manifest path.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    image_paths = []
    for i, img in enumerate(make_images(seed, n_images, image_size)):
        rel = f"images/img_{i:03d}.ptns"
        write_tensor(root / rel, img.astype(np.float32))
        image_paths.append(rel)

    encoders = synthesize_checkpoints(seed, n=len(epochs), schedule=epochs)
    downstream = demo_downstream_scores(epochs) if with_downstream else None
    checkpoints = []
    for idx, (epoch, enc) in enumerate(zip(epochs, encoders)):
        rel = f"checkpoints/{enc.checkpoint_id}"
        save_encoder(enc, root / rel)
        entry = {
            "id": enc.checkpoint_id,
            "epoch": int(epoch),
            "kind": "weights",
            "path": rel,
        }
        if idx == 0 and epoch == 0:
            entry["random_init"] = True
        if downstream is not None:
            entry["downstream"] = downstream[idx]
        checkpoints.append(entry)

    manifest = {
        "seed": int(seed),
        "config": {
            "distance": config.distance,
            "margin": config.margin,
            "level": config.level,
            "pooled": config.pooled,
        },
        "images": image_paths,
        "checkpoints": checkpoints,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path
