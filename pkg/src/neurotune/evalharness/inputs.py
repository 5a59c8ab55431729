"""Turn a TrialSet into the array dict a model family consumes."""

from __future__ import annotations

import numpy as np

from ..container import TrialSet
from ..signalprep import PipelineConfig, pipeline, preprocess, stack_patched

FAMILY_STYLE = {
    "labram_like": "labram",
    "neurogpt_encoder_like": "neurogpt",
    "neurogpt_full_like": "neurogpt",
    "eegnet_like": "raw",
    "eeginception_like": "raw",
}

_PATCH_KEYS = ("patches", "temporal_index", "spatial_index")


def style_for(model_cfg, style: str = "auto") -> str:
    return FAMILY_STYLE[model_cfg.family] if style == "auto" else style


def fit_length(x: np.ndarray, n: int) -> np.ndarray:
    """Crop or zero-pad the last axis to ``n`` samples."""
    if x.shape[-1] >= n:
        return x[..., :n]
    pad = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, pad)


def prepare_inputs(ts: TrialSet, model_cfg, style: str = "auto", threshold_mm: float | None = None) -> dict:
    """Preprocess every trial for ``model_cfg``'s family.  Labram inputs are
    trimmed to the longest attention length in the set."""
    style = style_for(model_cfg, style)
    if style == "raw":
        x = ts.X.astype(np.float64)
        if x.shape[1] != model_cfg.n_chans:
            raise ValueError(f"model expects {model_cfg.n_chans} channels, data has {x.shape[1]}")
        return {"x": fit_length(x, model_cfg.n_times)}
    overrides = {} if threshold_mm is None else {"threshold_mm": threshold_mm}
    cfg = PipelineConfig.for_style(style, **overrides)
    if style == "labram":
        cfg = PipelineConfig.for_style(style, max_patches=model_cfg.max_patches, **overrides)
        batch = stack_patched([pipeline(rec, cfg).patched for rec in ts.recordings()])
        n = int(batch["attention_length"].max())
        for key in _PATCH_KEYS:
            batch[key] = batch[key][:, :n]
        return batch
    if style == "neurogpt":
        x = np.stack([preprocess(rec, cfg).recording.data for rec in ts.recordings()])
        if x.shape[1] != model_cfg.n_chans:
            raise ValueError(f"model expects {model_cfg.n_chans} channels, pipeline produced {x.shape[1]}")
        return {"x": fit_length(x, model_cfg.n_times)}
    raise ValueError(f"unknown pipeline style '{style}'")


def n_items(inputs: dict) -> int:
    return len(next(iter(inputs.values())))


def take(inputs: dict, idx) -> dict:
    """Row subset; patch-token inputs are trimmed to the batch's longest sequence."""
    idx = np.asarray(idx)
    out = {k: v[idx] for k, v in inputs.items()}
    if "attention_length" in out and len(idx):
        n = int(out["attention_length"].max())
        for key in _PATCH_KEYS:
            out[key] = out[key][:, :n]
    return out
