"""Command-line entry point wiring the full workflow:
synth -> patchify -> pool -> run -> report, plus replay for auditing.

Exit codes: 0 success, 2 configuration error, 3 learner/adapter failure,
4 replay mismatch. Every subcommand writes provenance.json (the resolved
config and seed) into its output directory; any experiment is reproducible
from provenance.json plus the input files.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .data import DatasetManifest, ManifestError, load_manifest, save_manifest
from .harness import (
    ALRunConfig,
    RepetitionError,
    compute_budget,
    load_run_config,
    load_selections,
    replay_records,
    run_experiment,
)
from .learner import LearnerConfig
from .metrics import uniqueness_score
from .ports import LearnerError
from .report import (
    MetricsRow,
    SeriesPoint,
    UniquenessRow,
    aggregate_series,
    fmt,
    metrics_rows,
    read_metrics_csv,
    read_uniqueness_csv,
    render_curves,
    render_selection_diagnostics,
    write_metrics_csv,
    write_uniqueness_csv,
)
from .synth import PoolError, PoolSpec, SynthConfig, build_disjoint_pools, build_pool, generate_synthetic, patchify
from .seeding import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_LEARNER = 3
EXIT_MISMATCH = 4

ALL_STRATEGIES = ("random", "entropy", "coreset")


def _resolve_out(out: str | None) -> Path:
    if out:
        return Path(out)
    env = os.environ.get("ALBENCH_OUT")
    if env:
        return Path(env)
    raise click.UsageError("no output directory: pass --out or set ALBENCH_OUT")


def _write_provenance(out_dir: Path, command: str, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "provenance.json", "w") as fh:
        json.dump({"command": command, "params": params}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_manifest_or_die(path: str | None, flag: str) -> DatasetManifest:
    if not path:
        raise click.UsageError(f"missing required flag {flag}")
    try:
        return load_manifest(path)
    except ManifestError as exc:
        raise click.UsageError(f"{flag}: {exc}") from exc


@click.group()
def main():
    """Desk-scale active-learning benchmark for defect segmentation."""


@main.command()
@click.option("--n-images", default=200, show_default=True, type=int)
@click.option("--height", default=48, show_default=True, type=int)
@click.option("--width", default=48, show_default=True, type=int)
@click.option("--defect-prob", default=0.5, show_default=True, type=float)
@click.option("--count-range", default=(1, 2), show_default=True, type=(int, int))
@click.option("--radius-range", default=(2, 5), show_default=True, type=(int, int))
@click.option("--noise-sd", default=0.08, show_default=True, type=float)
@click.option("--contrast", default=0.18, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None, help="output directory (default $ALBENCH_OUT)")
def synth(n_images, height, width, defect_prob, count_range, radius_range, noise_sd, contrast, seed, out):
    """Generate a synthetic defect dataset with manifest.json."""
    out_dir = _resolve_out(out)
    try:
        config = SynthConfig(
            n_images=n_images, height=height, width=width,
            defect_probability=defect_prob, defect_count_range=tuple(count_range),
            defect_radius_range=tuple(radius_range), background_noise_sd=noise_sd,
            defect_contrast=contrast, seed=seed,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    manifest = generate_synthetic(config, out_dir)
    _write_provenance(out_dir, "synth", {
        "n_images": n_images, "height": height, "width": width,
        "defect_prob": defect_prob, "count_range": list(count_range),
        "radius_range": list(radius_range), "noise_sd": noise_sd,
        "contrast": contrast, "seed": seed, "out": str(out_dir),
    })
    click.echo(f"wrote {len(manifest)} records to {out_dir} "
               f"(faulty fraction {fmt(float(manifest.realized_faulty_fraction))})")


@main.command("patchify")
@click.option("--manifest", "manifest_path", required=True, type=str)
@click.option("--patch-h", required=True, type=int)
@click.option("--patch-w", required=True, type=int)
@click.option("--out", default=None)
def patchify_cmd(manifest_path, patch_h, patch_w, out):
    """Tile every record into non-overlapping patches."""
    out_dir = _resolve_out(out)
    source = _load_manifest_or_die(manifest_path, "--manifest")
    try:
        patched = patchify(source, patch_h, patch_w, out_dir)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc
    _write_provenance(out_dir, "patchify", {
        "manifest": str(Path(manifest_path).resolve()),
        "patch_h": patch_h, "patch_w": patch_w, "out": str(out_dir),
    })
    click.echo(f"wrote {len(patched)} patches to {out_dir} "
               f"(faulty fraction {fmt(float(patched.realized_faulty_fraction))})")


@main.command()
@click.option("--source", "source_path", required=True, type=str)
@click.option("--size", required=True, type=int, help="pool size")
@click.option("--fraction", required=True, type=float, help="pool target faulty fraction")
@click.option("--test-size", default=None, type=int, help="also build a disjoint test manifest")
@click.option("--test-fraction", default=None, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None)
def pool(source_path, size, fraction, test_size, test_fraction, seed, out):
    """Build an imbalance-controlled pool (and optional disjoint test set)."""
    out_dir = _resolve_out(out)
    source = _load_manifest_or_die(source_path, "--source")
    if (test_size is None) != (test_fraction is None):
        raise click.UsageError("--test-size and --test-fraction go together")
    try:
        pool_spec = PoolSpec(target_faulty_fraction=fraction, size=size,
                             seed=derive_seed(seed, "pool"), role="pool")
        if test_size is not None:
            test_spec = PoolSpec(target_faulty_fraction=test_fraction, size=test_size,
                                 seed=derive_seed(seed, "test"), role="test")
            pool_m, test_m = build_disjoint_pools(source, pool_spec, test_spec)
            save_manifest(pool_m, out_dir / "pool_manifest.json")
            save_manifest(test_m, out_dir / "test_manifest.json")
            click.echo(f"pool: {len(pool_m)} records (pi_u {fmt(float(pool_m.realized_faulty_fraction))}); "
                       f"test: {len(test_m)} records (pi_t {fmt(float(test_m.realized_faulty_fraction))})")
        else:
            pool_m = build_pool(source, pool_spec)
            save_manifest(pool_m, out_dir / "pool_manifest.json")
            click.echo(f"pool: {len(pool_m)} records (pi_u {fmt(float(pool_m.realized_faulty_fraction))})")
    except (PoolError, ValueError) as exc:
        raise click.UsageError(str(exc)) from exc
    _write_provenance(out_dir, "pool", {
        "source": str(Path(source_path).resolve()), "size": size, "fraction": fraction,
        "test_size": test_size, "test_fraction": test_fraction, "seed": seed,
        "out": str(out_dir),
    })


def _learner_config(scales: str, learning_rate: float, epochs: int, seed: int) -> LearnerConfig:
    try:
        parsed = tuple(int(s) for s in scales.split(",") if s.strip())
        return LearnerConfig(scales=parsed, learning_rate=learning_rate, epochs=epochs, seed=seed)
    except ValueError as exc:
        raise click.UsageError(f"bad learner config: {exc}") from exc


def _uniqueness_rows(strategy, pi_u, pi_t, records, repetitions, cycles):
    rows = []
    if repetitions < 2:
        return rows
    by_cycle: dict[int, list] = {}
    for rec in records:
        by_cycle.setdefault(rec.cycle, []).append(rec.selected_ids)
    for cycle in range(cycles):
        u = uniqueness_score(by_cycle[cycle], cycle=cycle)
        rows.append(UniquenessRow(strategy=strategy, pi_u=pi_u, pi_t=pi_t,
                                  cycle=cycle, us=u.us, b=u.b, R=u.R))
    return rows


@main.command()
@click.option("--pool", "pool_path", default=None, type=str)
@click.option("--test", "test_path", default=None, type=str)
@click.option("--strategy", default="all", show_default=True,
              type=click.Choice(ALL_STRATEGIES + ("all",)))
@click.option("--cycles", default=10, show_default=True, type=int)
@click.option("--budget-fraction", default=0.02, show_default=True, type=float)
@click.option("--reps", default=15, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--model-cmd", default=None, type=str,
              help="external learner adapter command line")
@click.option("--scales", default="3,7,15", show_default=True)
@click.option("--learning-rate", default=0.05, show_default=True, type=float)
@click.option("--epochs", default=40, show_default=True, type=int)
@click.option("--grid", is_flag=True, default=False,
              help="sweep (pi_u, pi_t) cells built inline from --source")
@click.option("--source", "source_path", default=None, type=str)
@click.option("--pi-u", "pi_u_values", multiple=True, type=float)
@click.option("--pi-t", "pi_t_values", multiple=True, type=str,
              help="test faulty fraction, or 'same' for pi_t = pi_u")
@click.option("--pool-size", default=None, type=int)
@click.option("--test-size", default=None, type=int)
@click.option("--out", default=None)
def run(pool_path, test_path, strategy, cycles, budget_fraction, reps, seed, workers,
        model_cmd, scales, learning_rate, epochs, grid, source_path, pi_u_values,
        pi_t_values, pool_size, test_size, out):
    """Run the AL experiment (one strategy or all three)."""
    out_dir = _resolve_out(out)
    strategies = ALL_STRATEGIES if strategy == "all" else (strategy,)
    learner = _learner_config(scales, learning_rate, epochs, seed)

    if grid:
        cells = _build_grid_cells(source_path, pi_u_values, pi_t_values,
                                  pool_size, test_size, seed, out_dir)
    else:
        pool_m = _load_manifest_or_die(pool_path, "--pool")
        test_m = _load_manifest_or_die(test_path, "--test")
        cells = [(out_dir, pool_m, test_m)]

    all_rows: list[MetricsRow] = []
    uniq_rows: list[UniquenessRow] = []
    for cell_dir, pool_m, test_m in cells:
        if set(pool_m.ids) & set(test_m.ids):
            raise click.UsageError("pool and test manifests share ids; they must be disjoint")
        pi_u = float(pool_m.realized_faulty_fraction)
        pi_t = float(test_m.realized_faulty_fraction)
        try:
            budget = compute_budget(len(pool_m), budget_fraction)
        except ValueError as exc:
            raise click.UsageError(str(exc)) from exc
        for strat in strategies:
            try:
                config = ALRunConfig(
                    strategy=strat, cycles=cycles, budget_fraction=budget_fraction,
                    repetitions=reps, base_seed=seed, learner=learner,
                    model_cmd=model_cmd, workers=workers,
                )
            except ValueError as exc:
                raise click.UsageError(str(exc)) from exc
            run_dir = cell_dir / strat
            try:
                records = run_experiment(pool_m, test_m, config, run_dir)
            except (RepetitionError, LearnerError) as exc:
                click.echo(f"learner failure in strategy {strat}: {exc}", err=True)
                sys.exit(EXIT_LEARNER)
            all_rows.extend(metrics_rows(strat, pi_u, pi_t, len(pool_m), budget, records))
            uniq_rows.extend(_uniqueness_rows(strat, pi_u, pi_t, records, reps, cycles))

    write_metrics_csv(all_rows, out_dir / "metrics.csv")
    write_uniqueness_csv(uniq_rows, out_dir / "uniqueness.csv")
    _write_provenance(out_dir, "run", {
        "strategies": list(strategies),
        "cycles": cycles, "budget_fraction": budget_fraction, "reps": reps,
        "seed": seed, "workers": workers, "model_cmd": model_cmd,
        "learner": {"scales": list(learner.scales), "learning_rate": learner.learning_rate,
                    "epochs": learner.epochs, "smoothing": learner.smoothing,
                    "prob_clamp": learner.prob_clamp, "seed": learner.seed},
        "cells": [
            {
                "dir": str(d.relative_to(out_dir)) if _under(d, out_dir) else str(d),
                "pool_manifest": str(p.path),
                "test_manifest": str(t.path),
            }
            for d, p, t in cells
        ],
        "out": str(out_dir),
    })
    click.echo(f"wrote {len(all_rows)} metric rows to {out_dir / 'metrics.csv'}")


def _under(path: Path, root: Path) -> bool:
    try:
        path.resolve().relative_to(root.resolve())
        return True
    except ValueError:
        return False


def _build_grid_cells(source_path, pi_u_values, pi_t_values, pool_size, test_size, seed, out_dir):
    if not source_path:
        raise click.UsageError("--grid requires --source")
    if not pi_u_values or not pi_t_values:
        raise click.UsageError("--grid requires at least one --pi-u and one --pi-t")
    if not pool_size or not test_size:
        raise click.UsageError("--grid requires --pool-size and --test-size")
    source = _load_manifest_or_die(source_path, "--source")
    cells = []
    index = 0
    for pi_u in pi_u_values:
        for pi_t_raw in pi_t_values:
            pi_t = pi_u if pi_t_raw == "same" else float(pi_t_raw)
            cell_dir = out_dir / "cells" / f"piu{fmt(pi_u)}_pit{fmt(pi_t)}"
            try:
                pool_m, test_m = build_disjoint_pools(
                    source,
                    PoolSpec(target_faulty_fraction=pi_u, size=pool_size,
                             seed=derive_seed(seed, "grid-pool", index), role="pool"),
                    PoolSpec(target_faulty_fraction=pi_t, size=test_size,
                             seed=derive_seed(seed, "grid-test", index), role="test"),
                )
            except (PoolError, ValueError) as exc:
                raise click.UsageError(f"grid cell pi_u={pi_u} pi_t={pi_t}: {exc}") from exc
            pool_m = save_manifest(pool_m, cell_dir / "pool_manifest.json")
            test_m = save_manifest(test_m, cell_dir / "test_manifest.json")
            cells.append((cell_dir, pool_m, test_m))
            index += 1
    return cells


@main.command("report")
@click.option("--run-dir", "run_dir", required=True, type=str)
@click.option("--out", default=None, help="where to write SVGs (default: run dir)")
def report_cmd(run_dir, out):
    """Render figure analogs from a run directory's CSVs."""
    run_path = Path(run_dir)
    metrics_path = run_path / "metrics.csv"
    if not metrics_path.is_file():
        raise click.UsageError(f"--run-dir: no metrics.csv under {run_path}")
    out_dir = Path(out) if out else run_path
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = read_metrics_csv(metrics_path)
    uniq_path = run_path / "uniqueness.csv"
    uniq_rows = read_uniqueness_csv(uniq_path) if uniq_path.is_file() else []

    facets = sorted({(r.pi_u, r.pi_t) for r in rows})
    for pi_u, pi_t in facets:
        facet_rows = [r for r in rows if (r.pi_u, r.pi_t) == (pi_u, pi_t)]
        series = aggregate_series(facet_rows, "f1_defect")
        render_curves(
            series,
            f"defect F1 vs budget (pool faulty {fmt(pi_u)}, test faulty {fmt(pi_t)})",
            out_dir / f"f1_curves_{fmt(pi_u)}_{fmt(pi_t)}.svg",
        )
    for pi_u in sorted({r.pi_u for r in rows}):
        sel_rows = [r for r in rows if r.pi_u == pi_u]
        faulty_series = aggregate_series(sel_rows, "faulty_selected_fraction", x_attr="cycle")
        uniq_series = {}
        for u in uniq_rows:
            if u.pi_u == pi_u:
                uniq_series.setdefault(u.strategy, []).append(
                    SeriesPoint(x=u.cycle, mean=u.us, q1=u.us, q3=u.us)
                )
        render_selection_diagnostics(
            faulty_series, uniq_series, pi_u, out_dir / f"selection_diag_{fmt(pi_u)}.svg"
        )
    click.echo(f"rendered {len(facets)} curve panels to {out_dir}")


@main.command()
@click.option("--run-dir", "run_dir", required=True, type=str)
def replay(run_dir):
    """Recompute metrics from stored selections; verify bit-for-bit."""
    run_path = Path(run_dir)
    prov_path = run_path / "provenance.json"
    if not prov_path.is_file():
        raise click.UsageError(f"--run-dir: no provenance.json under {run_path}")
    with open(prov_path) as fh:
        provenance = json.load(fh)
    if provenance.get("command") != "run":
        raise click.UsageError(f"--run-dir: provenance is for {provenance.get('command')!r}, not a run")
    params = provenance["params"]
    if params.get("model_cmd"):
        raise click.UsageError("replay requires the built-in learner (adapter runs are excluded)")
    stored_metrics = run_path / "metrics.csv"
    if not stored_metrics.is_file():
        raise click.UsageError(f"--run-dir: no metrics.csv under {run_path}")

    learner = LearnerConfig(
        scales=tuple(params["learner"]["scales"]),
        learning_rate=params["learner"]["learning_rate"],
        epochs=params["learner"]["epochs"],
        smoothing=params["learner"]["smoothing"],
        prob_clamp=params["learner"]["prob_clamp"],
        seed=params["learner"]["seed"],
    )
    all_rows: list[MetricsRow] = []
    uniq_rows: list[UniquenessRow] = []
    for cell in params["cells"]:
        cell_dir = run_path / cell["dir"] if cell["dir"] != "." else run_path
        pool_m = _load_manifest_or_die(cell["pool_manifest"], "pool_manifest")
        test_m = _load_manifest_or_die(cell["test_manifest"], "test_manifest")
        pi_u = float(pool_m.realized_faulty_fraction)
        pi_t = float(test_m.realized_faulty_fraction)
        budget = compute_budget(len(pool_m), params["budget_fraction"])
        for strat in params["strategies"]:
            strat_dir = cell_dir / strat
            if not (strat_dir / "config.json").is_file():
                raise click.UsageError(f"missing run config under {strat_dir}")
            run_cfg = load_run_config(strat_dir)
            config = ALRunConfig(
                strategy=strat, cycles=run_cfg["cycles"],
                budget_fraction=run_cfg["budget_fraction"],
                repetitions=run_cfg["repetitions"], base_seed=run_cfg["base_seed"],
                learner=learner,
            )
            try:
                selections = load_selections(strat_dir, config.repetitions, config.cycles)
            except FileNotFoundError as exc:
                raise click.UsageError(str(exc)) from exc
            records = replay_records(pool_m, test_m, config, selections)
            all_rows.extend(metrics_rows(strat, pi_u, pi_t, len(pool_m), budget, records))
            uniq_rows.extend(_uniqueness_rows(strat, pi_u, pi_t, records,
                                              config.repetitions, config.cycles))

    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        recomputed = Path(tmp) / "metrics.csv"
        write_metrics_csv(all_rows, recomputed)
        ok = _compare_files(stored_metrics, recomputed, "metrics.csv")
        stored_uniq = run_path / "uniqueness.csv"
        if stored_uniq.is_file():
            recomputed_uniq = Path(tmp) / "uniqueness.csv"
            write_uniqueness_csv(uniq_rows, recomputed_uniq)
            ok = _compare_files(stored_uniq, recomputed_uniq, "uniqueness.csv") and ok
    if not ok:
        sys.exit(EXIT_MISMATCH)
    click.echo("replay consistent: stored metrics match recomputation bit-for-bit")


def _compare_files(stored: Path, recomputed: Path, label: str) -> bool:
    a = stored.read_bytes()
    b = recomputed.read_bytes()
    if a == b:
        return True
    a_lines = a.decode(errors="replace").splitlines()
    b_lines = b.decode(errors="replace").splitlines()
    for i, (la, lb) in enumerate(zip(a_lines, b_lines)):
        if la != lb:
            click.echo(f"{label}: first divergence at line {i + 1}:", err=True)
            click.echo(f"  stored:     {la}", err=True)
            click.echo(f"  recomputed: {lb}", err=True)
            return False
    click.echo(f"{label}: line counts differ ({len(a_lines)} vs {len(b_lines)})", err=True)
    return False


if __name__ == "__main__":
    main()
