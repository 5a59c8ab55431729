"""Adapter grids: rank sweep, layer-type combinations and dropout on/off.

Every (variant, fold) pair is an independent job keyed by a fingerprint of
the experiment, variant and fold.  Finished jobs are written to a run store
one JSON file each, so an interrupted grid resumes where it stopped and a
job shared by two studies is trained once.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..io_util import atomic_write_text
from .harness import HarnessContext, Variant
from .reports import (
    FOLD_COLUMNS,
    SUMMARY_COLUMNS,
    fold_rows,
    load_records,
    rank_tables,
    summary_row,
    write_csv,
    write_json,
)
from .training import RunResult

log = logging.getLogger(__name__)

MANIFEST = "experiment.json"


class ResumeConflict(RuntimeError):
    """Output directory holds runs from a different experiment."""


class RunStore:
    """Append-only directory of run records (``runs/<fingerprint>.json``)."""

    def __init__(self, root, experiment_fp: str, manifest: dict | None = None):
        self.root = Path(root)
        self.runs = self.root / "runs"
        self.runs.mkdir(parents=True, exist_ok=True)
        path = self.root / MANIFEST
        if path.exists():
            found = json.loads(path.read_text()).get("experiment_fingerprint")
            if found != experiment_fp:
                raise ResumeConflict(
                    f"{self.root} holds runs of experiment {found}, not {experiment_fp}; use a fresh output_dir"
                )
        else:
            write_json(path, {"experiment_fingerprint": experiment_fp, **(manifest or {})})
        self.experiment_fp = experiment_fp

    def path(self, fp: str) -> Path:
        return self.runs / f"{fp}.json"

    def has(self, fp: str) -> bool:
        return self.path(fp).exists()

    def load(self, fp: str) -> RunResult:
        return RunResult.from_dict(json.loads(self.path(fp).read_text())["result"])

    def save(self, variant: Variant, fold: int, result: RunResult) -> None:
        record = {"variant": variant.to_dict(), "fold": fold, "result": result.to_dict()}
        atomic_write_text(self.path(result.fingerprint), json.dumps(record, indent=2, sort_keys=True) + "\n")

    def records(self) -> list[dict]:
        return load_records(self.root)


_WORKER_CTX: HarnessContext | None = None


def _init_worker(ctx: HarnessContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_job(job: tuple[Variant, int]) -> RunResult:
    variant, fold = job
    return _WORKER_CTX.run_fold(variant, fold)


def execute(ctx: HarnessContext, jobs, store: RunStore | None = None, workers: int = 1) -> dict[str, RunResult]:
    """Run every (variant, fold) job not already in ``store``; results keyed
    by job fingerprint."""
    unique: dict[str, tuple[Variant, int]] = {}
    for variant, fold in jobs:
        unique.setdefault(ctx.job_fingerprint(variant, fold), (variant, fold))
    results: dict[str, RunResult] = {}
    pending = []
    for fp, job in unique.items():
        if store is not None and store.has(fp):
            results[fp] = store.load(fp)
        else:
            pending.append((fp, job))
    if pending:
        log.info("%d jobs to run, %d resumed", len(pending), len(unique) - len(pending))

    def _collect(fp, job, result):
        results[fp] = result
        if store is not None:
            store.save(job[0], job[1], result)

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            futures = [(fp, job, pool.submit(_run_job, job)) for fp, job in pending]
            for fp, job, fut in futures:
                _collect(fp, job, fut.result())
    else:
        for fp, job in pending:
            _collect(fp, job, ctx.run_fold(*job))
    return results


def _variant_runs(ctx, results, variant) -> list[dict]:
    return [results[ctx.job_fingerprint(variant, f)].to_dict() for f in range(ctx.plan.k)]


def _grid(ctx, variants, store, workers) -> list[tuple[Variant, list[dict]]]:
    jobs = [(v, f) for v in variants for f in range(ctx.plan.k)]
    results = execute(ctx, jobs, store, workers)
    return [(v, _variant_runs(ctx, results, v)) for v in variants]


def _lora_variant(ctx, targets, rank, dropout=None) -> Variant:
    base = ctx.cfg.lora
    p = base.dropout if dropout is None else dropout
    return Variant.adapters(targets, rank, base.conv_rank, p, base.alpha)


def rank_sweep_variants(ctx) -> list[Variant]:
    return [_lora_variant(ctx, ctx.cfg.lora.targets, r) for r in ctx.cfg.harness.ranks]


def run_rank_sweep(ctx: HarnessContext, store=None, workers: int = 1) -> list[dict]:
    """Per rank: mean accuracy and trainable parameters (conv rank fixed)."""
    rows = []
    for v, runs in _grid(ctx, rank_sweep_variants(ctx), store, workers):
        rows.append(summary_row(v.label, v.to_dict(), runs))
    return rows


def best_rank(rows: list[dict]) -> int:
    """Rank with the highest mean accuracy; ties go to the smaller rank."""
    scored = [r for r in rows if r.get("mean_acc") is not None]
    if not scored:
        raise ValueError("no successful rank-sweep rows to choose a rank from")
    return min(scored, key=lambda r: (-r["mean_acc"], r["rank"]))["rank"]


def run_layer_ablation(ctx: HarnessContext, r_prime: int, store=None, workers: int = 1) -> list[dict]:
    variants = [_lora_variant(ctx, combo, r_prime) for combo in ctx.cfg.harness.layer_combos]
    return [summary_row(v.label, v.to_dict(), runs) for v, runs in _grid(ctx, variants, store, workers)]


def run_dropout_study(ctx: HarnessContext, store=None, workers: int = 1) -> tuple[list[dict], list[dict]]:
    """Signed accuracy change from the first to the last dropout setting, per
    rank.  Returns (long rows ending in a mean row, one wide row)."""
    ps = ctx.cfg.harness.dropouts
    p_base, p_treat = ps[0], ps[-1]
    ranks = ctx.cfg.harness.ranks
    variants = {(r, p): _lora_variant(ctx, ctx.cfg.lora.targets, r, p) for r in ranks for p in (p_base, p_treat)}
    grid = dict(zip(variants, _grid(ctx, list(variants.values()), store, workers)))
    rows, deltas = [], []
    for r in ranks:
        base = summary_row("", variants[(r, p_base)].to_dict(), grid[(r, p_base)][1])
        treat = summary_row("", variants[(r, p_treat)].to_dict(), grid[(r, p_treat)][1])
        a, b = treat.get("mean_acc"), base.get("mean_acc")
        delta = None if a is None or b is None else a - b
        rows.append({"rank": r, "p_base": p_base, "p_treat": p_treat, "acc_base": b, "acc_treat": a, "delta": delta})
        if delta is not None:
            deltas.append(delta)
    mean = sum(deltas) / len(deltas) if deltas else None
    rows.append({"rank": "mean", "p_base": p_base, "p_treat": p_treat, "delta": mean})
    wide = {"model": ctx.model_cfg.name or ctx.model_cfg.family, **{f"r{row['rank']}": row["delta"] for row in rows[:-1]},
            "mean": mean}
    return rows, [wide]


RANK_COLUMNS = ["rank", "conv_rank", "kinds", "trainable_params", "mean_acc", "std_acc", "n_folds", "n_failed", "flag"]
LAYER_COLUMNS = ["kinds", "rank", "conv_rank", "trainable_params", "mean_acc", "std_acc", "n_folds", "n_failed", "flag"]
DROPOUT_COLUMNS = ["rank", "p_base", "p_treat", "acc_base", "acc_treat", "delta"]


def run_ablation(ctx: HarnessContext, out_dir, workers: int = 1) -> dict[str, Path]:
    """Run the configured studies, writing run records and aggregate CSVs."""
    out = Path(out_dir)
    store = RunStore(out, ctx.experiment_fp, {"config": ctx.cfg.model_dump(mode="json")})
    studies = ctx.cfg.harness.studies
    written: dict[str, Path] = {}
    sweep = None
    if "rank_sweep" in studies:
        sweep = run_rank_sweep(ctx, store, workers)
        written["rank_sweep"] = write_csv(out / "rank_sweep.csv", RANK_COLUMNS, sweep)
        by_params, by_rank = rank_tables(sweep)
        written["acc_vs_params"] = write_csv(out / "acc_vs_params.csv", list(by_params[0]) if by_params else [], by_params)
        written["acc_vs_rank"] = write_csv(out / "acc_vs_rank.csv", list(by_rank[0]) if by_rank else [], by_rank)
    if "layer_ablation" in studies:
        r_prime = ctx.cfg.harness.r_prime or (best_rank(sweep) if sweep else ctx.cfg.lora.rank)
        rows = run_layer_ablation(ctx, r_prime, store, workers)
        written["layer_ablation"] = write_csv(out / "layer_ablation.csv", LAYER_COLUMNS, rows)
    if "dropout_study" in studies:
        rows, wide = run_dropout_study(ctx, store, workers)
        written["dropout_study"] = write_csv(out / "dropout_study.csv", DROPOUT_COLUMNS, rows)
        written["dropout_delta"] = write_csv(out / "dropout_delta.csv", list(wide[0]), wide)
    return written


def run_training(ctx: HarnessContext, variant: Variant, out_dir, workers: int = 1) -> dict[str, Path]:
    """Cross-validate one variant; per-fold JSON records plus fold and summary CSVs."""
    out = Path(out_dir)
    store = RunStore(out, ctx.experiment_fp, {"config": ctx.cfg.model_dump(mode="json")})
    (v, runs), = _grid(ctx, [variant], store, workers)
    return {
        "folds": write_csv(out / "folds.csv", FOLD_COLUMNS, fold_rows(v.label, runs)),
        "summary": write_csv(out / "summary.csv", SUMMARY_COLUMNS, [summary_row(v.label, v.to_dict(), runs)]),
    }
