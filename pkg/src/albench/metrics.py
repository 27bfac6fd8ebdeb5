"""Evaluation criteria: defect-class F1, faulty-selection proportion,
uniqueness score across repetitions, and mean/IQR aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DatasetManifest
from .validation import check_same_shape

PREDICTION_THRESHOLD = 0.5  # pinned; no tuning


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel counts micro-aggregated over a whole test set."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            tn=self.tn + other.tn,
        )

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        if denom == 0:
            return 0.0
        return 2.0 * self.tp / denom


def confusion_counts(prediction: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Pixel confusion counts of a thresholded prediction vs a binary mask."""
    pred = np.asarray(prediction)
    true = np.asarray(truth)
    check_same_shape(pred, true, "prediction and truth")
    p = pred != 0
    t = true != 0
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        fn=int(np.sum(~p & t)),
        tn=int(np.sum(~p & ~t)),
    )


def f1_defect(predictions, truths) -> float:
    """Micro-aggregated defect-class F1 over paired thresholded masks.

    F1 = 2tp / (2tp + fp + fn); 0 when the denominator is 0.
    """
    preds = list(predictions)
    trues = list(truths)
    if len(preds) != len(trues):
        raise ValueError("predictions and truths must pair up")
    total = ConfusionCounts()
    for p, t in zip(preds, trues):
        total = total + confusion_counts(p, t)
    return total.f1


def faulty_selected_fraction(selected, manifest: DatasetManifest) -> float:
    """Fraction of the selected ids whose manifest entry is faulty."""
    ids = list(selected)
    if not ids:
        raise ValueError("empty selection")
    n_faulty = sum(1 for i in ids if manifest.entry(i).faulty)
    return n_faulty / len(ids)


@dataclass(frozen=True)
class UniquenessRecord:
    cycle: int
    us: float
    b: int
    R: int

    def __post_init__(self):
        if not 0.0 <= self.us <= 1.0:
            raise ValueError(f"uniqueness score {self.us} outside [0, 1]")


def uniqueness_score(selections_per_repetition, cycle: int = 0) -> UniquenessRecord:
    """Normalized count of distinct images selected at one cycle across
    repetitions: (|union of the R sets| - b) / (b (R - 1)).

    0 when every repetition chose the same set, 1 when all pairwise disjoint.
    """
    sets = [frozenset(int(i) for i in s) for s in selections_per_repetition]
    if len(sets) < 2:
        raise ValueError("uniqueness needs at least 2 repetitions")
    sizes = {len(s) for s in sets}
    if len(sizes) != 1:
        raise ValueError(f"unequal selection sizes across repetitions: {sorted(sizes)}")
    b = sizes.pop()
    if b == 0:
        raise ValueError("selections are empty")
    r = len(sets)
    union = frozenset().union(*sets)
    us = (len(union) - b) / (b * (r - 1))
    return UniquenessRecord(cycle=cycle, us=us, b=b, R=r)


def aggregate(values) -> dict[str, float]:
    """Mean, Q1 and Q3 (linear-interpolation quantiles) of a non-empty group."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty group")
    q1, q3 = np.quantile(arr, [0.25, 0.75], method="linear")
    return {"mean": float(arr.mean()), "q1": float(q1), "q3": float(q3)}


def aggregate_by(records, key_fn, value_fn) -> dict:
    """Group records by key_fn and aggregate value_fn per group.

    Permutation-invariant in record order: groups are aggregated over
    sorted value multisets.
    """
    groups: dict = {}
    for rec in records:
        groups.setdefault(key_fn(rec), []).append(value_fn(rec))
    return {k: aggregate(sorted(v)) for k, v in sorted(groups.items())}
