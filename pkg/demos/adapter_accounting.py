"""
Where the trainable parameters of an adapted model live
=========================================================

Builds the desk-scale labram-like model, attaches low-rank adapters to every
combination of layer kinds and prints the trainable count next to the
closed-form sum of r(d + k).  Finally merges one adapted model and compares
its logits with the unmerged one.
"""

import itertools

import numpy as np

from neurotune.lora import TARGET_KINDS, LoraConfig, inject, merge, remove, trainable_param_count
from neurotune.modelzoo import build_model, count, load_model_config

cfg = load_model_config("labram_like_reference")
model = build_model(cfg)
print(f"{cfg.name}: {count(model):,} parameters")

# every nonempty combination of layer kinds at rank 2
print(f"\n{'targets':<36} {'conv rank':>9} {'trainable':>10} {'r(d+k) + head':>14}")
for n in (1, 2, 3):
    for targets in itertools.combinations(TARGET_KINDS, n):
        am = inject(model, LoraConfig(targets=targets, rank=2))
        print(f"{'+'.join(targets):<36} {str(am.conv_rank or '-'):>9} {trainable_param_count(am):>10,} "
              f"{am.formula_count():>14,}")
        remove(am)

# the update folds into the base weights without changing the function
am = inject(build_model(cfg), LoraConfig(rank=4), np.random.default_rng(0)).eval()
rng = np.random.default_rng(1)
for adapter in am.adapters.values():
    adapter.B.data = rng.normal(0, 0.05, adapter.B.shape)
x = am.model.example_input(batch=4, rng=rng)
diff = np.abs(am(x).data - merge(am).eval()(x).data).max()
print(f"\nmax |adapted - merged| logit difference: {diff:.2e}")
