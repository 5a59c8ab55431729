"""Deterministic JSON/CSV writers and table builders."""

from __future__ import annotations

import csv
import io
import itertools
import json
from pathlib import Path

from ..io_util import atomic_write_text
from .stats import aggregate, paired_ttest


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h)) for h in header])
    return buf.getvalue()


def write_csv(path, header: list[str], rows: list[dict]) -> Path:
    path = Path(path)
    atomic_write_text(path, csv_text(header, rows))
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj) -> Path:
    path = Path(path)
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


SUMMARY_COLUMNS = ["run_set", "mode", "kinds", "rank", "conv_rank", "dropout", "trainable_params",
                   "mean_acc", "std_acc", "n_folds", "n_failed", "flag"]
FOLD_COLUMNS = ["run_set", "fold", "accuracy", "n_correct", "n_val", "trainable_params", "status", "fingerprint"]
TTEST_COLUMNS = ["run_set_a", "run_set_b", "n", "t", "df", "p", "mean_diff", "flag"]


def summary_row(run_set: str, variant: dict, runs: list[dict]) -> dict:
    ok = [r for r in runs if r["status"] == "ok"]
    lora = variant.get("lora") or {}
    row = {
        "run_set": run_set,
        "mode": variant["mode"],
        "kinds": "+".join(lora.get("targets", [])),
        "rank": lora.get("rank"),
        "conv_rank": runs[0]["info"].get("conv_rank") if runs else None,
        "dropout": lora.get("dropout"),
        "trainable_params": runs[0]["trainable_params"] if runs else None,
        "n_folds": len(ok),
        "n_failed": len(runs) - len(ok),
    }
    if ok:
        agg = aggregate(r["accuracy"] for r in ok)
        row.update(mean_acc=agg.mean, std_acc=agg.std, flag=agg.flag)
    else:
        row.update(flag="all_failed")
    return row


def fold_rows(run_set: str, runs: list[dict]) -> list[dict]:
    return [
        {
            "run_set": run_set,
            "fold": r["info"]["fold"],
            "accuracy": r["accuracy"],
            "n_correct": r["n_correct"],
            "n_val": r["n_val"],
            "trainable_params": r["trainable_params"],
            "status": r["status"],
            "fingerprint": r["fingerprint"],
        }
        for r in sorted(runs, key=lambda r: r["info"]["fold"])
    ]


def ttest_rows(run_sets: dict[str, list[dict]]) -> list[dict]:
    """Paired tests between every two run sets that share a fold plan.  Only
    folds that succeeded in both sets are paired."""
    rows = []
    for a, b in itertools.combinations(sorted(run_sets), 2):
        ra = {r["info"]["fold"]: r for r in run_sets[a] if r["status"] == "ok"}
        rb = {r["info"]["fold"]: r for r in run_sets[b] if r["status"] == "ok"}
        plans = {r["info"]["plan"] for r in run_sets[a]} | {r["info"]["plan"] for r in run_sets[b]}
        folds = sorted(set(ra) & set(rb))
        if len(plans) != 1 or len(folds) < 2:
            continue
        res = paired_ttest([ra[f]["accuracy"] for f in folds], [rb[f]["accuracy"] for f in folds])
        rows.append({"run_set_a": a, "run_set_b": b, "n": len(folds), **res.to_dict()})
    return rows


def rank_tables(summary: list[dict]) -> tuple[list[dict], list[dict]]:
    """Plot data: accuracy against trainable parameters and against rank."""
    rows = sorted((r for r in summary if r["mode"] == "lora" and "mean_acc" in r), key=lambda r: (r["rank"], r["run_set"]))
    by_params = [{k: r[k] for k in ("trainable_params", "mean_acc", "std_acc", "rank", "kinds")} for r in rows]
    by_rank = [{k: r[k] for k in ("rank", "mean_acc", "std_acc", "kinds")} for r in rows]
    return by_params, by_rank


def load_records(root) -> list[dict]:
    """All run records under ``root``, sorted by fingerprint."""
    runs = Path(root) / "runs"
    if not runs.is_dir():
        raise FileNotFoundError(f"no run records under {root}")
    return [json.loads(p.read_text()) for p in sorted(runs.glob("*.json"))]


def _variant_label(variant: dict) -> str:
    from .harness import Variant

    return Variant.from_dict(variant).label


def collect_run_sets(roots) -> tuple[dict[str, list[dict]], dict[str, dict]]:
    """Group run records by variant.  With several roots, run-set names are
    prefixed by the root directory name."""
    roots = [Path(r) for r in roots]
    prefix = len(roots) > 1
    sets: dict[str, list[dict]] = {}
    variants: dict[str, dict] = {}
    for root in roots:
        for rec in load_records(root):
            label = _variant_label(rec["variant"])
            name = f"{root.name}:{label}" if prefix else label
            sets.setdefault(name, []).append(rec["result"])
            variants[name] = rec["variant"]
    for runs in sets.values():
        runs.sort(key=lambda r: r["info"]["fold"])
    return sets, variants


def build_report(roots, out_dir) -> dict[str, Path]:
    """Merged summary, per-fold table, paired t-test matrix and plot data."""
    sets, variants = collect_run_sets(roots)
    if not sets:
        raise ValueError("no run records found")
    out = Path(out_dir)
    names = sorted(sets)
    summary = [summary_row(n, variants[n], sets[n]) for n in names]
    folds = [row for n in names for row in fold_rows(n, sets[n])]
    tests = ttest_rows(sets)
    by_params, by_rank = rank_tables(summary)
    written = {
        "summary": write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary),
        "folds": write_csv(out / "folds.csv", FOLD_COLUMNS, folds),
        "ttest": write_csv(out / "ttest.csv", TTEST_COLUMNS, tests),
    }
    if by_params:
        written["acc_vs_params"] = write_csv(out / "acc_vs_params.csv", list(by_params[0]), by_params)
        written["acc_vs_rank"] = write_csv(out / "acc_vs_rank.csv", list(by_rank[0]), by_rank)
    written["report"] = write_json(out / "report.json", {"summary": summary, "ttest": tests})
    return written
