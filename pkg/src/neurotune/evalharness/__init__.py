"""Subject-independent cross-validation, adapter ablation grids, statistics and reports."""

from .ablation import (
    ResumeConflict,
    RunStore,
    best_rank,
    execute,
    run_ablation,
    run_dropout_study,
    run_layer_ablation,
    run_rank_sweep,
    run_training,
)
from .folds import FoldPlan, LeakageError, check_disjoint, split_subject_kfold
from .harness import FoldResults, HarnessContext, Variant, cross_validate, fold_seed, variant_from_config
from .inputs import prepare_inputs, take
from .reports import build_report, collect_run_sets, read_csv, ttest_rows, write_csv, write_json
from .stats import Aggregate, StatTest, aggregate, betainc_reg, paired_ttest, t_cdf, t_sf_two_sided
from .training import RunResult, TrainSettings, accuracy, default_lr, fit, perturb_backbone, predict, train_run

__all__ = [
    "Aggregate",
    "FoldPlan",
    "FoldResults",
    "HarnessContext",
    "LeakageError",
    "ResumeConflict",
    "RunResult",
    "RunStore",
    "StatTest",
    "TrainSettings",
    "Variant",
    "accuracy",
    "aggregate",
    "best_rank",
    "betainc_reg",
    "build_report",
    "check_disjoint",
    "collect_run_sets",
    "cross_validate",
    "default_lr",
    "execute",
    "fit",
    "fold_seed",
    "paired_ttest",
    "perturb_backbone",
    "predict",
    "prepare_inputs",
    "read_csv",
    "run_ablation",
    "run_dropout_study",
    "run_layer_ablation",
    "run_rank_sweep",
    "run_training",
    "split_subject_kfold",
    "t_cdf",
    "t_sf_two_sided",
    "take",
    "train_run",
    "ttest_rows",
    "variant_from_config",
    "write_csv",
    "write_json",
]
