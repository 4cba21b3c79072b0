"""Segmentation thresholding, Dice loss, and the evaluation metric suite.

Predictions are probability tensors: ``(B, H, W)`` post-sigmoid values
for binary tasks, ``(B, H, W, C+1)`` softmax rows (class 0 is the
background) for multiclass.  Hard metrics run on pooled one-vs-rest
pixel counts over the whole batch; multiclass scores average over the
non-background classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, ShapeMismatchError

MODE_CHOICES = ("binary", "multiclass")

DICE_SMOOTHING = 1.0
LOSS_SMOOTHING = 1e-5


def _check_mode(mode: str) -> None:
    if mode not in MODE_CHOICES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODE_CHOICES}")


def _check_probs(probs, mode: str) -> np.ndarray:
    arr = np.asarray(probs, dtype=np.float64)
    if mode == "binary":
        if arr.ndim != 3:
            raise ShapeMismatchError(f"binary predictions must be (B, H, W), got {arr.shape}")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("binary probabilities must lie in [0, 1]")
    else:
        if arr.ndim != 4 or arr.shape[-1] < 2:
            raise ShapeMismatchError(
                f"multiclass predictions must be (B, H, W, C+1) with C >= 1, got {arr.shape}"
            )
        if np.abs(arr.sum(axis=-1) - 1.0).max() > 1e-6:
            raise ValueError("multiclass probability rows must sum to 1 within 1e-6")
    return arr


def _check_labels(labels, name: str = "labels") -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 3:
        raise ShapeMismatchError(f"{name} must be (B, H, W), got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be integer typed, got {arr.dtype}")
    if arr.min() < 0:
        raise ValueError(f"{name} contains negative class ids")
    return arr.astype(np.int64)


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-class one-vs-rest pixel tallies; each class sums to the pixel count."""

    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    pixel_count: int

    @property
    def num_classes(self) -> int:
        return self.tp.shape[0]


def binarize(probs, mode: str) -> np.ndarray:
    """Hard labels from probabilities.

    Multiclass takes the per-pixel argmax with ties resolved toward the
    lowest class index; binary marks a pixel positive only when its
    value strictly exceeds 0.5.
    """
    _check_mode(mode)
    arr = _check_probs(probs, mode)
    if mode == "binary":
        return (arr > 0.5).astype(np.int64)
    return np.argmax(arr, axis=-1).astype(np.int64)


def confusion(pred_labels, truth, num_classes: int | None = None) -> ConfusionCounts:
    """One-vs-rest TP/FP/FN/TN pixel tallies pooled over the batch."""
    pred = _check_labels(pred_labels, "pred_labels")
    true = _check_labels(truth, "truth")
    if pred.shape != true.shape:
        raise ShapeMismatchError(
            f"prediction shape {pred.shape} does not match truth shape {true.shape}"
        )
    if num_classes is None:
        num_classes = int(max(pred.max(), true.max())) + 1
    if pred.max() >= num_classes or true.max() >= num_classes:
        raise ValueError(
            f"labels exceed the declared class count {num_classes}"
        )
    joint = np.bincount(
        (pred.ravel() * num_classes + true.ravel()).astype(np.int64),
        minlength=num_classes * num_classes,
    ).reshape(num_classes, num_classes)
    tp = np.diag(joint).astype(np.int64)
    fp = joint.sum(axis=1) - tp  # predicted c, truth otherwise
    fn = joint.sum(axis=0) - tp
    total = pred.size
    tn = total - tp - fp - fn
    return ConfusionCounts(tp, fp, fn, tn, total)


def dice_per_class(counts: ConfusionCounts) -> np.ndarray:
    """Smoothed Dice per class: (2 TP + 1) / (2 TP + FP + FN + 1)."""
    tp = counts.tp.astype(np.float64)
    return (2.0 * tp + DICE_SMOOTHING) / (
        2.0 * tp + counts.fp + counts.fn + DICE_SMOOTHING
    )


def jaccard_per_class(counts: ConfusionCounts) -> np.ndarray:
    """Jaccard per class, derived from the smoothed Dice as D / (2 - D).

    Deriving from the smoothed Dice (rather than smoothing separately)
    keeps the exact monotone Dice/Jaccard relation.
    """
    dice = dice_per_class(counts)
    return dice / (2.0 - dice)


def mcc_per_class(counts: ConfusionCounts) -> np.ndarray:
    """Matthews correlation per class; any zero denominator factor gives 0."""
    tp = counts.tp.astype(np.float64)
    fp = counts.fp.astype(np.float64)
    fn = counts.fn.astype(np.float64)
    tn = counts.tn.astype(np.float64)
    numerator = tp * tn - fp * fn
    factors = np.stack([tp + fp, tp + fn, tn + fp, tn + fn])
    denom = np.sqrt(factors).prod(axis=0)
    out = np.zeros(counts.num_classes, dtype=np.float64)
    nonzero = denom > 0.0
    out[nonzero] = numerator[nonzero] / denom[nonzero]
    return out


def _reduce(per_class: np.ndarray, mode: str) -> float:
    _check_mode(mode)
    if mode == "binary":
        if per_class.shape[0] != 2:
            raise ShapeMismatchError(
                f"binary counts must cover exactly 2 classes, got {per_class.shape[0]}"
            )
        return float(per_class[1])
    if per_class.shape[0] < 2:
        raise ShapeMismatchError("multiclass counts must cover at least 2 classes")
    return float(per_class[1:].mean())


def dice_index(counts: ConfusionCounts, mode: str) -> float:
    """Smoothed Dice; the positive class for binary, the non-background mean otherwise."""
    return _reduce(dice_per_class(counts), mode)


def jaccard_index(counts: ConfusionCounts, mode: str) -> float:
    """Jaccard with the same reduction as :func:`dice_index`."""
    return _reduce(jaccard_per_class(counts), mode)


def mcc(counts: ConfusionCounts, mode: str) -> float:
    """Matthews correlation with the same reduction as :func:`dice_index`."""
    return _reduce(mcc_per_class(counts), mode)


def dice_loss(probs, truth, mode: str, smoothing: float = LOSS_SMOOTHING) -> float:
    """Soft Dice loss over all classes including the background.

    ``1 - mean_c (2 <pred_c, y_c> + s) / (|pred_c|^2 + |y_c|^2 + s)``
    with the inner products pooled over the whole batch.  Binary inputs
    contribute two channels, the sigmoid output and its complement.
    """
    _check_mode(mode)
    arr = _check_probs(probs, mode)
    true = _check_labels(truth, "truth")
    if mode == "binary":
        channels = np.stack([1.0 - arr, arr], axis=-1)
    else:
        channels = arr
    if true.shape != channels.shape[:-1]:
        raise ShapeMismatchError(
            f"truth shape {true.shape} does not match prediction spatial shape "
            f"{channels.shape[:-1]}"
        )
    num_classes = channels.shape[-1]
    if true.max() >= num_classes:
        raise ValueError(f"truth contains class ids beyond {num_classes - 1}")
    onehot = (true[..., None] == np.arange(num_classes)).astype(np.float64)
    ratio_sum = 0.0
    for c in range(num_classes):
        pred_c = channels[..., c].ravel()
        true_c = onehot[..., c].ravel()
        numerator = 2.0 * float(pred_c @ true_c) + smoothing
        denominator = float(pred_c @ pred_c) + float(true_c @ true_c) + smoothing
        ratio_sum += numerator / denominator
    return 1.0 - ratio_sum / num_classes


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises on constant input, where the correlation is undefined.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ShapeMismatchError(
            f"spearman needs two equal-length 1-D sequences, got {xs.shape} and {ys.shape}"
        )
    if xs.shape[0] < 2:
        raise ValueError("spearman needs at least 2 observations")
    rank_x = rankdata(xs, method="average")
    rank_y = rankdata(ys, method="average")
    cx = rank_x - rank_x.mean()
    cy = rank_y - rank_y.mean()
    var_x = float(cx @ cx)
    var_y = float(cy @ cy)
    if var_x == 0.0 or var_y == 0.0:
        raise DegenerateInputError("spearman is undefined for constant input")
    return float(cx @ cy) / np.sqrt(var_x * var_y)
