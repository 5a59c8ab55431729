"""Subject-independent cross-validation of one fine-tuning variant.

The backbone is built (or loaded) once and shared by every fold; each fold
gets a fresh head and fresh adapters drawn from a fold-specific seed that
depends only on the master seed and the fold index, so different variants
see identical splits and head initializations and can be compared pairwise.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import ExperimentConfig
from ..container import TrialSet, read_container
from ..diffcore import load_checkpoint
from ..lora import LoraConfig, inject
from ..modelzoo import build_model, config_to_dict, freeze, unfreeze
from .folds import FoldPlan, split_subject_kfold
from .inputs import prepare_inputs, style_for, take
from .stats import Aggregate, aggregate
from .training import RunResult, TrainSettings, default_lr, train_run

log = logging.getLogger(__name__)

MODES = ("full", "head_only", "lora")


def fingerprint_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Variant:
    """How a model is fine-tuned: everything, the head only, or adapters."""

    mode: str
    lora: Optional[LoraConfig] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fine-tuning mode '{self.mode}'")
        if (self.mode == "lora") != (self.lora is not None):
            raise ValueError("a lora config is required for, and only for, mode 'lora'")

    @classmethod
    def adapters(cls, targets, rank: int, conv_rank="auto", dropout: float = 0.0, alpha: float = 8.0) -> "Variant":
        return cls("lora", LoraConfig(targets=targets, rank=rank, conv_rank=conv_rank, dropout=dropout, alpha=alpha))

    @property
    def label(self) -> str:
        if self.lora is None:
            return self.mode
        c = self.lora
        return f"lora[{c.label}|r={c.rank}|rc={c.conv_rank}|p={c.dropout}|a={c.alpha}]"

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode}
        if self.lora is not None:
            out["lora"] = self.lora.model_dump(mode="json", exclude={"seed"})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Variant":
        lora = d.get("lora")
        return cls(d["mode"], LoraConfig(**lora) if lora else None)


def fold_seed(master: int, fold: int) -> int:
    return int(np.random.SeedSequence([master, fold]).generate_state(1)[0])


@dataclass
class HarnessContext:
    """Prepared data, fold plan and shared backbone for one experiment."""

    cfg: ExperimentConfig
    model_cfg: object
    data: TrialSet
    inputs: dict
    plan: FoldPlan
    base_state: dict
    settings: TrainSettings
    experiment_fp: str
    plan_fp: str = field(init=False)

    def __post_init__(self):
        self.plan_fp = fingerprint_of(self.plan.to_dict())

    @classmethod
    def build(cls, cfg: ExperimentConfig, data: TrialSet | None = None, base_state: dict | None = None) -> "HarnessContext":
        model_cfg = cfg.resolved_model()
        if data is None:
            if cfg.data is None:
                raise ValueError("experiment config names no data container")
            data = read_container(cfg.data)
        if data.n_classes > model_cfg.n_cls and not (model_cfg.n_cls == 1 and data.n_classes == 2):
            raise ValueError(f"data has {data.n_classes} classes but model head has n_cls={model_cfg.n_cls}")
        inputs = prepare_inputs(data, model_cfg, cfg.pipeline, cfg.threshold_mm)
        plan = split_subject_kfold(data.subjects, cfg.harness.folds, cfg.seed)
        extra = {}
        if base_state is None:
            if cfg.backbone_checkpoint:
                base_state = load_checkpoint(cfg.backbone_checkpoint)
                extra["backbone"] = hashlib.sha256(
                    (Path(cfg.backbone_checkpoint) / "tensors.bin").read_bytes()
                ).hexdigest()[:16]
            else:
                base_state = build_model(model_cfg).state_dict()
        else:
            extra["backbone"] = fingerprint_of({k: hashlib.sha256(np.ascontiguousarray(v).tobytes()).hexdigest()
                                                for k, v in sorted(base_state.items())})
        h = cfg.harness
        lr = h.lr if h.lr is not None else default_lr(model_cfg.family)
        settings = TrainSettings(h.epochs, h.batch_size, lr, h.optimizer, h.eval_batch_size)
        exp_fp = fingerprint_of({"config": cfg.fingerprint(), "data": data.fingerprint(), **extra})
        return cls(cfg, model_cfg, data, inputs, plan, base_state, settings, exp_fp)

    def job_fingerprint(self, variant: Variant, fold: int) -> str:
        return fingerprint_of({"experiment": self.experiment_fp, "variant": variant.to_dict(), "fold": fold})

    def instantiate(self, variant: Variant, fold: int):
        """Shared backbone + fold-seeded head (and adapters), with the right
        parameters frozen."""
        seed = fold_seed(self.cfg.seed, fold)
        model = build_model(self.model_cfg)
        backbone = {k: v for k, v in self.base_state.items() if not k.startswith("head.")}
        model.load_state_dict(backbone, strict=False)
        model.reset_head(np.random.default_rng([seed, 1]))
        if variant.mode == "full":
            return unfreeze(model)
        if variant.mode == "head_only":
            return freeze(unfreeze(model), "backbone")
        return inject(model, variant.lora, np.random.default_rng([seed, 2]))

    def run_fold(self, variant: Variant, fold: int) -> RunResult:
        train_idx, val_idx = self.plan.split(self.data.subjects, fold)
        model = self.instantiate(variant, fold)
        y = self.data.y
        info = {"variant": variant.label, "fold": fold, "plan": self.plan_fp, "n_train": int(len(train_idx))}
        if variant.lora is not None:
            info["conv_rank"] = model.conv_rank
        return train_run(
            model,
            (take(self.inputs, train_idx), y[train_idx]),
            (take(self.inputs, val_idx), y[val_idx]),
            self.settings,
            fold_seed(self.cfg.seed, fold),
            self.job_fingerprint(variant, fold),
            info,
        )


@dataclass
class FoldResults:
    variant: Variant
    runs: list[RunResult]
    plan: FoldPlan

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.runs if r.ok]

    @property
    def failed(self) -> int:
        return sum(not r.ok for r in self.runs)

    def aggregate(self) -> Aggregate:
        return aggregate(self.accuracies)

    @property
    def trainable_params(self) -> int:
        return self.runs[0].trainable_params


def cross_validate(ctx: HarnessContext, variant: Variant, folds=None) -> FoldResults:
    """One RunResult per fold (all folds unless ``folds`` lists a subset)."""
    folds = range(ctx.plan.k) if folds is None else folds
    runs = [ctx.run_fold(variant, f) for f in folds]
    return FoldResults(variant, runs, ctx.plan)


def variant_from_config(cfg: ExperimentConfig) -> Variant:
    if cfg.harness.mode == "lora":
        return Variant("lora", cfg.lora)
    return Variant(cfg.harness.mode)


def model_summary(ctx: HarnessContext) -> dict:
    return {"model": config_to_dict(ctx.model_cfg), "style": style_for(ctx.model_cfg, ctx.cfg.pipeline)}
