"""Distances, triplet hinge terms, and the robustness score.

Robustness of an encoder over a set of images: each image is jittered
twice, the first version becoming the query and the second the positive
key; the positive key of another image (the cyclic successor in a seeded
permutation) serves as the negative key.  The score is one minus the
mean triplet hinge over those triples, so representations that are
stable under jitter yet separate different images score high.

Scores computed for different checkpoints over the same (images, seed)
share identical augmentations, which isolates the encoder as the only
variable in a cross-checkpoint comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import JitterParams, color_jitter
from .errors import DegenerateInputError, ShapeMismatchError
from .prng import PrngStream, compose_stream_id

DISTANCE_CHOICES = ("cosine", "l2", "pearson")
LEVEL_CHOICES = ("last", "second_to_last")

_ROLE_QUERY = 301
_ROLE_KEY = 302
_ROLE_PAIRING = 303


@dataclass(frozen=True)
class RobustnessConfig:
    """Distance, margin, encoder level, and pooling used for scoring."""

    distance: str = "cosine"
    margin: float = 0.5
    level: str = "second_to_last"
    pooled: bool = True

    def __post_init__(self):
        if self.distance not in DISTANCE_CHOICES:
            raise ValueError(
                f"unknown distance {self.distance!r}, expected one of {DISTANCE_CHOICES}"
            )
        if self.level not in LEVEL_CHOICES:
            raise ValueError(
                f"unknown level {self.level!r}, expected one of {LEVEL_CHOICES}"
            )
        if not (np.isfinite(self.margin) and self.margin > 0):
            raise ValueError(f"margin must be a positive real, got {self.margin}")


@dataclass(frozen=True)
class TripletSet:
    """Per-image (query, positive key, negative key) embeddings, as (n, dim) arrays."""

    queries: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        arrays = []
        for name in ("queries", "positives", "negatives"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2:
                raise ShapeMismatchError(f"{name} must be 2-D (n, dim), got {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            arrays.append(arr)
            object.__setattr__(self, name, arr)
        if not (arrays[0].shape == arrays[1].shape == arrays[2].shape):
            raise ShapeMismatchError(
                "queries, positives, and negatives must share one shape, got "
                f"{[a.shape for a in arrays]}"
            )
        if arrays[0].shape[0] < 2:
            raise ValueError(f"need at least 2 triplets, got {arrays[0].shape[0]}")

    @property
    def n(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]


def _as_vector(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeMismatchError(f"{name} must be a nonempty 1-D vector, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def _vector_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    va = _as_vector(a, "a")
    vb = _as_vector(b, "b")
    if va.shape != vb.shape:
        raise ShapeMismatchError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return va, vb


def cosine_distance(a, b) -> float:
    """1 - <a, b> / (|a| |b|), in [0, 2].

    Zero exactly when the vectors are positive scalar multiples of each
    other; zero-norm inputs raise rather than returning NaN.
    """
    va, vb = _vector_pair(a, b)
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("cosine distance is undefined for zero-norm vectors")
    return 1.0 - float(np.dot(va, vb)) / (norm_a * norm_b)


def l2_distance(a, b) -> float:
    """Euclidean norm of the difference."""
    va, vb = _vector_pair(a, b)
    return float(np.linalg.norm(va - vb))


def pearson_distance(a, b) -> float:
    """1 - r(a, b) with r the sample Pearson correlation, in [0, 2]."""
    va, vb = _vector_pair(a, b)
    if va.shape[0] < 2:
        raise ShapeMismatchError("pearson distance needs vectors of dimension >= 2")
    ca = va - va.mean()
    cb = vb - vb.mean()
    norm_a = float(np.linalg.norm(ca))
    norm_b = float(np.linalg.norm(cb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("pearson distance is undefined for constant vectors")
    return 1.0 - float(np.dot(ca, cb)) / (norm_a * norm_b)


_DISTANCE_FNS = {
    "cosine": cosine_distance,
    "l2": l2_distance,
    "pearson": pearson_distance,
}


def triplet_hinge(d_pos: float, d_neg: float, margin: float) -> float:
    """max(0, d_pos - d_neg + margin)."""
    if not (np.isfinite(d_pos) and np.isfinite(d_neg)):
        raise ValueError(f"distances must be finite, got {d_pos}, {d_neg}")
    if not (np.isfinite(margin) and margin > 0):
        raise ValueError(f"margin must be a positive real, got {margin}")
    return max(0.0, d_pos - d_neg + margin)


def robustness(triplets: TripletSet, cfg: RobustnessConfig) -> float:
    """1 minus the mean triplet hinge, accumulated in index order.

    The sequential reduction makes the result independent of any
    parallel schedule used to produce the embeddings.  Degenerate
    distance errors are re-raised with the offending triplet index.
    """
    dist = _DISTANCE_FNS[cfg.distance]
    total = 0.0
    for i in range(triplets.n):
        try:
            d_pos = dist(triplets.queries[i], triplets.positives[i])
            d_neg = dist(triplets.queries[i], triplets.negatives[i])
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"triplet {i}: {exc}") from exc
        total += triplet_hinge(d_pos, d_neg, cfg.margin)
    return 1.0 - total / triplets.n


def pool_or_flatten(fmap, pooled: bool) -> np.ndarray:
    """Spatial mean per channel (pooled) or a row-major flatten of (C, H, W)."""
    arr = np.asarray(fmap, dtype=np.float64)
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeMismatchError(f"expected a (C, H, W) feature map, got {arr.shape}")
    if pooled:
        return arr.mean(axis=(1, 2))
    return arr.reshape(-1)


def augment_pairs(images, seed: int, jitter: JitterParams = JitterParams()):
    """Two independent jitters per image: (query, positive key) image pairs.

    Image ``i`` draws from streams derived from ``(seed, role, i)``, so
    one image's augmentations never depend on how many images there are
    and parallel processing order cannot change the result.
    """
    seed = int(seed)
    pairs = []
    for i, img in enumerate(images):
        query = color_jitter(img, jitter, PrngStream(seed, compose_stream_id(_ROLE_QUERY, i)))
        key = color_jitter(img, jitter, PrngStream(seed, compose_stream_id(_ROLE_KEY, i)))
        pairs.append((query, key))
    return pairs


def negative_permutation(n: int, seed: int) -> np.ndarray:
    """Successor map pairing each image with its negative-key source.

    A seeded permutation ``perm`` of the image indices is drawn; image
    ``perm[j]`` takes the positive key of ``perm[(j + 1) % n]``.  For
    n >= 2 this is always a derangement, so no image is its own
    negative.
    """
    if n < 2:
        raise ValueError(f"need at least 2 images to pair negatives, got {n}")
    rng = PrngStream(int(seed), compose_stream_id(_ROLE_PAIRING))
    perm = rng.permutation(n)
    successor = np.empty(n, dtype=np.int64)
    for j in range(n):
        successor[perm[j]] = perm[(j + 1) % n]
    return successor


def build_triplets(
    images, encoder, cfg: RobustnessConfig, seed: int,
    jitter: JitterParams = JitterParams(),
) -> TripletSet:
    """Augment, encode, and pair a set of images into a TripletSet.

    Each image is encoded exactly twice (once per augmented version);
    negative keys reuse the positive-key embeddings selected by
    :func:`negative_permutation`, so they cost no extra forward pass.
    """
    images = list(images)
    if len(images) < 2:
        raise ValueError(f"need at least 2 images to build triplets, got {len(images)}")
    queries = []
    keys = []
    for query_img, key_img in augment_pairs(images, seed, jitter):
        queries.append(pool_or_flatten(encoder.forward(query_img, cfg.level), cfg.pooled))
        keys.append(pool_or_flatten(encoder.forward(key_img, cfg.level), cfg.pooled))
    successor = negative_permutation(len(images), seed)
    negatives = [keys[successor[i]] for i in range(len(images))]
    return TripletSet(np.array(queries), np.array(keys), np.array(negatives))
