"""
Low-rank fine-tuning against full and head-only training
=========================================================

A small labram-like backbone is first trained on a related synthetic task
(different frequencies and channels) and then perturbed, standing in for a
pretrained model.  Two folds of subject-independent cross-validation on the
default synthetic task compare three ways of fine-tuning it.  Takes a couple
of minutes on one core.
"""

import time

import numpy as np

from neurotune.config import parse_experiment_config
from neurotune.evalharness import HarnessContext, TrainSettings, Variant, fit, perturb_backbone, prepare_inputs
from neurotune.modelzoo import build_model
from neurotune.synthdata import ClassSpec, SynthSpec, generate

backbone_cfg = {"conv_filters": 4, "norm_groups": 2, "embed_dim": 100, "depth": 2, "heads": 4, "mlp_dim": 200}
cfg = parse_experiment_config({"model": "labram_like_reference", "model_overrides": backbone_cfg,
                               "harness": {"epochs": 10, "folds": 5}})
model_cfg = cfg.resolved_model()

source = generate(SynthSpec(subjects=10, seed=101, classes=(ClassSpec(6.0, (1, 3, 6)), ClassSpec(35.0, (0, 2, 5)))))
backbone = build_model(model_cfg)
losses = fit(backbone, prepare_inputs(source, model_cfg), source.y, TrainSettings(3, 32, 5e-4), seed=7)
print("source-task losses:", [round(x, 3) for x in losses])
perturb_backbone(backbone, 0.5, np.random.default_rng(3))

ctx = HarnessContext.build(cfg, generate(SynthSpec()), base_state=backbone.state_dict())
for variant in (Variant("head_only"), Variant("full"), Variant.adapters(["attention", "fully_connected", "conv"], 2)):
    t0 = time.perf_counter()
    runs = [ctx.run_fold(variant, fold) for fold in (0, 1)]
    acc = np.mean([r.accuracy for r in runs])
    share = runs[0].trainable_params / runs[0].total_params
    print(f"{variant.label:<60} acc {acc:.3f}  trainable {runs[0].trainable_params:>7,} ({100 * share:5.1f}%)  "
          f"{time.perf_counter() - t0:.0f}s")
