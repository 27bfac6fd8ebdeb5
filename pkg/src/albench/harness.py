"""Experiment orchestration: cycles, budgets, repetitions, seeds, bookkeeping.

Cycle 0 selects uniformly at random for every strategy (no model exists
yet); cycles 1..J-1 score only the never-selected remainder with the model
trained at the previous cycle. The model is retrained from scratch each
cycle on the cumulative labeled set. Every random draw derives from
(base_seed, repetition, cycle, purpose) via seeding.derive_seed, so
repetitions are independent and bit-replayable.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acquisition import (
    STRATEGIES,
    ScoreVector,
    mean_entropy,
    select_coreset,
    select_entropy,
    select_random,
)
from .data import DatasetManifest, read_patch, save_manifest
from .learner import LearnerConfig
from .metrics import PREDICTION_THRESHOLD, f1_defect, faulty_selected_fraction
from .ports import BuiltinLearnerPort, ExternalLearnerPort, LearnerError
from .seeding import derive_seed
from .synth import round_half_away


@dataclass(frozen=True)
class ALRunConfig:
    strategy: str
    cycles: int = 10
    budget_fraction: float = 0.02
    repetitions: int = 15
    base_seed: int = 0
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    model_cmd: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.cycles < 1:
            raise ValueError("cycles must be >= 1")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must lie in (0, 1]")
        if self.cycles * self.budget_fraction > 1.0 + 1e-12:
            raise ValueError(
                f"cycles x budget_fraction = {self.cycles * self.budget_fraction:.4f} exceeds 1"
            )
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class CycleRecord:
    repetition: int
    cycle: int
    selected_ids: tuple[int, ...]
    cumulative_labeled: int
    f1_defect: float
    faulty_selected_fraction: float
    wall_time: float = field(compare=False)  # advisory timing, never replayed

    def key(self) -> tuple[int, int]:
        return (self.repetition, self.cycle)


class RepetitionError(RuntimeError):
    def __init__(self, repetition: int, cycle: int, cause: Exception):
        super().__init__(f"repetition {repetition} failed at cycle {cycle}: {cause}")
        self.repetition = repetition
        self.cycle = cycle
        self.cause = cause


def compute_budget(pool_size: int, budget_fraction: float) -> int:
    """Per-cycle budget, fixed once from the initial pool size."""
    b = round_half_away(budget_fraction * pool_size)
    if b < 1:
        raise ValueError(
            f"budget round({budget_fraction} x {pool_size}) = {b}; must be >= 1"
        )
    return b


def _load_test_masks(test: DatasetManifest) -> dict[int, np.ndarray]:
    return {e.id: read_patch(test, e.id).mask for e in test.entries}


def make_builtin_port(pool: DatasetManifest, test: DatasetManifest, config: LearnerConfig) -> BuiltinLearnerPort:
    combined = DatasetManifest(entries=pool.entries + test.entries, role="pool")
    return BuiltinLearnerPort(combined, config)


def write_combined_manifest(pool: DatasetManifest, test: DatasetManifest, path: Path) -> Path:
    """Materialize the pool+test id universe for external adapters."""
    combined = DatasetManifest(entries=pool.entries + test.entries, role="pool")
    save_manifest(combined, path)
    return path


def run_repetition(
    pool: DatasetManifest,
    test: DatasetManifest,
    config: ALRunConfig,
    repetition_index: int,
    port,
    test_masks: dict[int, np.ndarray] | None = None,
) -> list[CycleRecord]:
    """One full AL repetition of config.cycles cycles against a port."""
    pool_ids = set(pool.ids)
    test_ids = sorted(test.ids)
    if pool_ids & set(test_ids):
        raise ValueError("pool and test manifests must be id-disjoint")
    budget = compute_budget(len(pool), config.budget_fraction)
    if config.cycles * budget > len(pool):
        raise ValueError(
            f"{config.cycles} cycles x budget {budget} exceeds pool size {len(pool)}"
        )
    if test_masks is None:
        test_masks = _load_test_masks(test)
    truths = [test_masks[i] for i in test_ids]

    remaining = sorted(pool_ids)
    labeled: list[int] = []
    records: list[CycleRecord] = []
    for cycle in range(config.cycles):
        started = time.perf_counter()
        try:
            chosen = _select(
                config, repetition_index, cycle, remaining, labeled, budget, port
            )
            labeled = labeled + chosen
            chosen_set = set(chosen)
            remaining = [i for i in remaining if i not in chosen_set]
            train_seed = derive_seed(config.base_seed, repetition_index, cycle, "train")
            port.train(labeled, train_seed)
            proba = port.predict_proba(test_ids)
            preds = [m > PREDICTION_THRESHOLD for m in proba]
            f1 = f1_defect(preds, truths)
            frac = faulty_selected_fraction(chosen, pool)
        except (LearnerError, ValueError, OSError) as exc:
            raise RepetitionError(repetition_index, cycle, exc) from exc
        records.append(
            CycleRecord(
                repetition=repetition_index,
                cycle=cycle,
                selected_ids=tuple(chosen),
                cumulative_labeled=(cycle + 1) * budget,
                f1_defect=f1,
                faulty_selected_fraction=frac,
                wall_time=time.perf_counter() - started,
            )
        )
    return records


def _select(config, repetition, cycle, remaining, labeled, budget, port) -> list[int]:
    select_seed = derive_seed(config.base_seed, repetition, cycle, "select")
    if cycle == 0 or config.strategy == "random":
        return list(select_random(remaining, budget, select_seed).chosen_ids)
    if config.strategy == "entropy":
        proba = port.predict_proba(remaining)
        scores = ScoreVector(
            ids=np.asarray(remaining, dtype=np.int64),
            scores=np.asarray([mean_entropy(m) for m in proba]),
        )
        return list(select_entropy(scores, budget).chosen_ids)
    if config.strategy == "coreset":
        centers = port.embed(labeled)
        cand = port.embed(remaining)
        pairs = list(zip(remaining, cand))
        return list(select_coreset(centers, pairs, budget).chosen_ids)
    raise ValueError(f"unknown strategy {config.strategy!r}")


# ---------------------------------------------------------------------------
# experiment = R repetitions + run-directory bookkeeping


def _port_for(config: ALRunConfig, pool, test, combined_manifest_path, workdir):
    if config.model_cmd:
        if combined_manifest_path is None:
            raise ValueError("external learner requires a combined manifest file")
        return ExternalLearnerPort(config.model_cmd, combined_manifest_path, workdir)
    return make_builtin_port(pool, test, config.learner)


def _run_rep_task(args) -> list[CycleRecord]:
    (pool, test, config, rep, combined_path, workdir) = args
    port = _port_for(config, pool, test, combined_path, Path(workdir) / f"rep{rep}")
    try:
        records = run_repetition(pool, test, config, rep, port)
        if isinstance(port, ExternalLearnerPort):
            port.save_transcript(Path(workdir) / f"adapter_transcript_rep{rep}.jsonl")
        return records
    finally:
        port.close()


def run_experiment(
    pool: DatasetManifest,
    test: DatasetManifest,
    config: ALRunConfig,
    run_dir: str | Path,
) -> list[CycleRecord]:
    """Run R repetitions; persist config, selections and status under run_dir.

    Records come back sorted by (repetition, cycle) regardless of execution
    order. On any repetition failure, partial results are flushed, status is
    marked incomplete, and the error propagates.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "selections").mkdir(exist_ok=True)
    budget = compute_budget(len(pool), config.budget_fraction)
    combined_path = None
    if config.model_cmd:
        combined_path = write_combined_manifest(pool, test, run_dir / "combined_manifest.json")
    _write_run_config(run_dir, pool, test, config, budget)

    records: list[CycleRecord] = []
    error: Exception | None = None
    try:
        if config.workers > 1:
            tasks = [
                (pool, test, config, rep, combined_path, str(run_dir))
                for rep in range(config.repetitions)
            ]
            with ProcessPoolExecutor(max_workers=config.workers) as pool_exec:
                for rep_records in pool_exec.map(_run_rep_task, tasks):
                    records.extend(rep_records)
        else:
            port = _port_for(config, pool, test, combined_path, run_dir / "adapter_io")
            test_masks = _load_test_masks(test)
            try:
                for rep in range(config.repetitions):
                    records.extend(
                        run_repetition(pool, test, config, rep, port, test_masks)
                    )
                if isinstance(port, ExternalLearnerPort):
                    port.save_transcript(run_dir / "adapter_transcript.jsonl")
            finally:
                port.close()
    except (RepetitionError, LearnerError, OSError) as exc:
        error = exc

    records.sort(key=lambda r: r.key())
    for rec in records:
        _write_selection(run_dir, rec)
    status = {
        "status": "complete" if error is None else "incomplete",
        "n_records": len(records),
        "expected_records": config.repetitions * config.cycles,
    }
    if error is not None:
        status["error"] = str(error)
    with open(run_dir / "status.json", "w") as fh:
        json.dump(status, fh, indent=1)
        fh.write("\n")
    if error is not None:
        raise error
    return records


def _write_run_config(run_dir: Path, pool, test, config: ALRunConfig, budget: int) -> None:
    payload = {
        "strategy": config.strategy,
        "cycles": config.cycles,
        "budget_fraction": config.budget_fraction,
        "repetitions": config.repetitions,
        "base_seed": config.base_seed,
        "budget": budget,
        "pool_size": len(pool),
        "test_size": len(test),
        "pi_u": float(pool.realized_faulty_fraction),
        "pi_t": float(test.realized_faulty_fraction),
        "pool_manifest": str(pool.path) if pool.path else None,
        "test_manifest": str(test.path) if test.path else None,
        "model_cmd": config.model_cmd,
        "workers": config.workers,
        "learner": {
            "scales": list(config.learner.scales),
            "learning_rate": config.learner.learning_rate,
            "epochs": config.learner.epochs,
            "smoothing": config.learner.smoothing,
            "prob_clamp": config.learner.prob_clamp,
            "seed": config.learner.seed,
        },
    }
    with open(run_dir / "config.json", "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _write_selection(run_dir: Path, rec: CycleRecord) -> None:
    path = run_dir / "selections" / f"rep{rec.repetition}_cycle{rec.cycle}.json"
    with open(path, "w") as fh:
        json.dump(
            {
                "repetition": rec.repetition,
                "cycle": rec.cycle,
                "selected_ids": list(rec.selected_ids),
            },
            fh,
        )
        fh.write("\n")


def load_run_config(run_dir: str | Path) -> dict:
    with open(Path(run_dir) / "config.json") as fh:
        return json.load(fh)


def load_selections(run_dir: str | Path, repetitions: int, cycles: int) -> dict[tuple[int, int], list[int]]:
    out: dict[tuple[int, int], list[int]] = {}
    for rep in range(repetitions):
        for cycle in range(cycles):
            path = Path(run_dir) / "selections" / f"rep{rep}_cycle{cycle}.json"
            if not path.is_file():
                raise FileNotFoundError(f"missing selections file {path}")
            with open(path) as fh:
                payload = json.load(fh)
            out[(rep, cycle)] = [int(i) for i in payload["selected_ids"]]
    return out


def replay_records(
    pool: DatasetManifest,
    test: DatasetManifest,
    config: ALRunConfig,
    selections: dict[tuple[int, int], list[int]],
) -> list[CycleRecord]:
    """Recompute every CycleRecord from stored selections (no acquisition)."""
    budget = compute_budget(len(pool), config.budget_fraction)
    test_ids = sorted(test.ids)
    test_masks = _load_test_masks(test)
    truths = [test_masks[i] for i in test_ids]
    port = make_builtin_port(pool, test, config.learner) if not config.model_cmd else None
    if port is None:
        raise ValueError("replay supports the built-in learner only")
    records: list[CycleRecord] = []
    try:
        for rep in range(config.repetitions):
            labeled: list[int] = []
            for cycle in range(config.cycles):
                chosen = selections[(rep, cycle)]
                labeled = labeled + chosen
                train_seed = derive_seed(config.base_seed, rep, cycle, "train")
                port.train(labeled, train_seed)
                proba = port.predict_proba(test_ids)
                preds = [m > PREDICTION_THRESHOLD for m in proba]
                records.append(
                    CycleRecord(
                        repetition=rep,
                        cycle=cycle,
                        selected_ids=tuple(chosen),
                        cumulative_labeled=(cycle + 1) * budget,
                        f1_defect=f1_defect(preds, truths),
                        faulty_selected_fraction=faulty_selected_fraction(chosen, pool),
                        wall_time=0.0,
                    )
                )
    finally:
        port.close()
    return records
