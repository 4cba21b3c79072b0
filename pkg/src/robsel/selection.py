"""Checkpoint choice from robustness series, and the transferability score.

Offline selection takes the robustness argmax over a finished series;
online selection consumes a stream of scores in epoch order and stops at
the first decline, which is the early-stopping reading of the indicator.
Both disregard the random-init entry by default: randomly initialized
encoders often score deceptively high.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

DEFAULT_EPOCH_GRID = (0, 1, 5, 20, 50, 100, 150, 200, 250, 300)

ONLINE_POLICIES = ("first_decrease",)


@dataclass(frozen=True)
class CheckpointSeries:
    """Ordered per-checkpoint robustness scores, with optional downstream scores.

    ``epochs`` must be strictly increasing; when ``includes_random_init``
    is set, the first entry is the untrained model.
    """

    epochs: tuple[int, ...]
    robustness: tuple[float, ...]
    downstream: tuple[float, ...] | None = None
    includes_random_init: bool = False

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        scores = tuple(float(r) for r in self.robustness)
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "robustness", scores)
        if len(epochs) == 0:
            raise ValueError("checkpoint series is empty")
        if len(scores) != len(epochs):
            raise ValueError(
                f"{len(epochs)} epochs but {len(scores)} robustness scores"
            )
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"epochs must be strictly increasing, got {epochs}")
        if not all(np.isfinite(scores)):
            raise ValueError("robustness scores must be finite")
        if self.downstream is not None:
            downstream = tuple(float(d) for d in self.downstream)
            object.__setattr__(self, "downstream", downstream)
            if len(downstream) != len(epochs):
                raise ValueError(
                    f"{len(epochs)} epochs but {len(downstream)} downstream scores"
                )

    def __len__(self) -> int:
        return len(self.epochs)

    def candidate_indices(self, include_random_init: bool = False) -> list[int]:
        """Indices eligible for selection (random init excluded by default)."""
        start = 1 if self.includes_random_init and not include_random_init else 0
        return list(range(start, len(self.epochs)))

    def iter_candidates(
        self, include_random_init: bool = False
    ) -> Iterator[tuple[int, float]]:
        """(epoch, robustness) pairs over the eligible checkpoints, in order."""
        for idx in self.candidate_indices(include_random_init):
            yield self.epochs[idx], self.robustness[idx]


@dataclass(frozen=True)
class SelectionResult:
    """A chosen checkpoint plus how many robustness scores were consumed."""

    chosen_epoch: int
    mode: str
    evaluated_count: int


def tis(downstream, indicator) -> float:
    """Transferability indicator score.

    The downstream score of the indicator-argmax checkpoint, relative to
    the best downstream score; 1 exactly when the indicator ranks the
    downstream-best checkpoint first.  Indicator ties resolve to the
    earliest entry.
    """
    down = np.asarray(downstream, dtype=np.float64)
    ind = np.asarray(indicator, dtype=np.float64)
    if down.ndim != 1 or ind.ndim != 1 or down.shape != ind.shape:
        raise ValueError(
            f"downstream and indicator must be equal-length 1-D, got "
            f"{down.shape} and {ind.shape}"
        )
    if down.size == 0:
        raise ValueError("tis needs at least one checkpoint")
    if not (np.isfinite(down).all() and np.isfinite(ind).all()):
        raise ValueError("tis inputs must be finite")
    if down.min() <= 0.0:
        raise ValueError("downstream scores must be positive")
    return float(down[int(np.argmax(ind))] / down.max())


def select_offline(
    series: CheckpointSeries, include_random_init: bool = False
) -> SelectionResult:
    """Argmax of robustness over the eligible checkpoints.

    Ties resolve to the earliest epoch (the cheaper pretraining run).
    """
    candidates = series.candidate_indices(include_random_init)
    if not candidates:
        raise ValueError("no candidate checkpoints to select from")
    scores = [series.robustness[i] for i in candidates]
    best = candidates[int(np.argmax(scores))]
    return SelectionResult(series.epochs[best], "offline", len(candidates))


def select_online(
    stream: Iterable[tuple[int, float]], policy: str = "first_decrease"
) -> SelectionResult:
    """Early-stopping selection over an (epoch, robustness) stream.

    The stream must yield non-random checkpoints in epoch order; pass
    ``CheckpointSeries.iter_candidates()`` or any lazy generator.  Under
    the first-decrease policy, consumption stops at the first score
    strictly below its predecessor and the predecessor's checkpoint is
    chosen; a never-declining stream returns its final checkpoint.
    ``evaluated_count`` is the number of scores consumed, which is the
    pretraining cost the stream actually incurred.
    """
    if policy not in ONLINE_POLICIES:
        raise ValueError(f"unknown policy {policy!r}, expected one of {ONLINE_POLICIES}")
    consumed = 0
    prev_epoch: int | None = None
    prev_score: float | None = None
    for epoch, score in stream:
        consumed += 1
        if prev_score is not None and score < prev_score:
            return SelectionResult(prev_epoch, "online", consumed)
        prev_epoch, prev_score = int(epoch), float(score)
    if prev_epoch is None:
        raise ValueError("online selection received an empty stream")
    return SelectionResult(prev_epoch, "online", consumed)


def worst_best_ratio(downstream) -> float:
    """min / max of positive downstream scores; low values mean the choice matters."""
    down = np.asarray(downstream, dtype=np.float64)
    if down.ndim != 1 or down.size == 0:
        raise ValueError("worst_best_ratio needs a nonempty 1-D sequence")
    if not np.isfinite(down).all() or down.min() <= 0.0:
        raise ValueError("downstream scores must be positive and finite")
    return float(down.min() / down.max())
