"""Selection strategies: uniform random, mean-entropy, k-center-greedy core-set.

Strategy names "random" | "entropy" | "coreset" are the stable identifiers
used in configs, CSV output and the CLI. Tie-breaking is everywhere
"lowest id wins" so replays are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed
from .validation import check_embedding_matrix

STRATEGIES = ("random", "entropy", "coreset")


@dataclass(frozen=True)
class ScoreVector:
    """Finite per-candidate scores, keyed by unique ids."""

    ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if ids.ndim != 1 or scores.ndim != 1 or ids.shape != scores.shape:
            raise ValueError("ids and scores must be 1-d and aligned")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("ids must be unique")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scores", scores)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class SelectionResult:
    chosen_ids: tuple[int, ...]
    strategy: str

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if len(set(self.chosen_ids)) != len(self.chosen_ids):
            raise ValueError("chosen_ids contains duplicates")
        object.__setattr__(self, "chosen_ids", tuple(int(i) for i in self.chosen_ids))


def _check_budget(budget: int, n: int) -> None:
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    if budget > n:
        raise ValueError(f"budget {budget} exceeds {n} candidates")


def select_random(candidates, budget: int, seed: int) -> SelectionResult:
    """Uniform sample without replacement; deterministic given seed."""
    ids = np.asarray(sorted(int(i) for i in candidates), dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("candidate ids must be unique")
    _check_budget(budget, len(ids))
    rng = np.random.default_rng(derive_seed(seed, "uniform-selection"))
    chosen = rng.choice(ids, size=budget, replace=False)
    return SelectionResult(chosen_ids=tuple(int(i) for i in chosen), strategy="random")


def mean_entropy(p: np.ndarray) -> float:
    """Pixel-averaged Shannon entropy in nats of a clamped probability map.

    Non-negative by construction: highest score = most uncertain image.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("probability map is empty")
    if arr.min() <= 0.0 or arr.max() >= 1.0:
        raise ValueError("probabilities must lie strictly inside (0, 1); clamp first")
    return float(-np.mean(arr * np.log(arr) + (1.0 - arr) * np.log(1.0 - arr)))


def select_entropy(scores: ScoreVector, budget: int) -> SelectionResult:
    """The budget ids with highest score; ties broken by lowest id."""
    _check_budget(budget, len(scores))
    order = np.lexsort((scores.ids, -scores.scores))
    chosen = scores.ids[order[:budget]]
    return SelectionResult(chosen_ids=tuple(int(i) for i in chosen), strategy="entropy")


def select_coreset(labeled_embeddings, candidate_embeddings, budget: int) -> SelectionResult:
    """k-center greedy (max-min Euclidean distance) over candidate embeddings.

    candidate_embeddings is a sequence of (id, vector) pairs. Centers start
    as the labeled embeddings; with no labels the first pick is the lowest
    candidate id. Each round picks the candidate farthest from its nearest
    center (ties -> lowest id), adds it as a center, and updates
    nearest-center distances incrementally, so the whole selection runs in
    O((L + B) * C * d).
    """
    pairs = list(candidate_embeddings)
    ids = np.asarray([int(i) for i, _ in pairs], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("candidate ids must be unique")
    _check_budget(budget, len(ids))
    if not pairs:
        return SelectionResult(chosen_ids=(), strategy="coreset")
    cand = check_embedding_matrix([v for _, v in pairs], name="candidate embeddings")
    order = np.argsort(ids)
    ids = ids[order]
    cand = cand[order]

    labeled = np.asarray(labeled_embeddings, dtype=np.float64)
    if labeled.size:
        labeled = check_embedding_matrix(labeled, dim=cand.shape[1], name="labeled embeddings")

    n = len(ids)
    if labeled.size:
        diffs = cand[:, None, :] - labeled[None, :, :]
        min_dist = np.sqrt((diffs * diffs).sum(axis=2)).min(axis=1)
    else:
        min_dist = np.full(n, np.inf)

    chosen: list[int] = []
    chosen_mask = np.zeros(n, dtype=bool)
    for _ in range(budget):
        # argmax returns the first maximum; ids are sorted, so ties go to
        # the lowest id
        masked = np.where(chosen_mask, -np.inf, min_dist)
        pick = int(np.argmax(masked))
        chosen.append(int(ids[pick]))
        chosen_mask[pick] = True
        delta = cand - cand[pick]
        dist_new = np.sqrt((delta * delta).sum(axis=1))
        min_dist = np.minimum(min_dist, dist_new)
    return SelectionResult(chosen_ids=tuple(chosen), strategy="coreset")
