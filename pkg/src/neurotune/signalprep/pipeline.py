"""The two model-specific preprocessing chains.

labram:   select global-montage channels -> resample 200 Hz -> band-pass 0.5-45 Hz
          -> notch 50/60/100 Hz -> CAR -> one-second patches
neurogpt: resample 250 Hz -> band-pass 0.05-100 Hz -> notch 50/100/60/120 Hz
          -> map onto the fixed 22-channel list -> CAR
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .filters import bandpass, notch, powerline_frequencies, resample
from .montage import GLOBAL_MONTAGE, NEUROGPT_MONTAGE, Montage, global_index
from .patching import MAX_PATCHES, patchify_labram
from .recording import ModelInput, Recording
from .spatial import DEFAULT_THRESHOLD_MM, car, map_channels

STYLES = ("labram", "neurogpt")


@dataclass(frozen=True)
class PipelineConfig:
    style: str
    fs: float
    band: tuple[float, float]
    notches: tuple[float, ...]
    notch_q: float = 30.0
    filter_order: int = 4
    threshold_mm: float = DEFAULT_THRESHOLD_MM
    max_patches: int = MAX_PATCHES
    target: Montage | None = None

    @classmethod
    def for_style(cls, style: str, **overrides) -> "PipelineConfig":
        if style == "labram":
            base = cls("labram", 200.0, (0.5, 45.0), (50.0, 60.0, 100.0))
        elif style == "neurogpt":
            base = cls("neurogpt", 250.0, (0.05, 100.0), tuple(powerline_frequencies(250.0)), target=NEUROGPT_MONTAGE)
        else:
            raise ValueError(f"unknown pipeline style '{style}', expected one of {STYLES}")
        overrides = {k: (tuple(v) if isinstance(v, list) else v) for k, v in overrides.items()}
        return replace(base, **overrides)


@dataclass
class Preprocessed:
    recording: Recording
    stages: list[str] = field(default_factory=list)
    mapping: dict | None = None


def preprocess(rec: Recording, cfg: PipelineConfig | str) -> Preprocessed:
    """Every stage of the chain except patching; returns the cleaned recording."""
    if isinstance(cfg, str):
        cfg = PipelineConfig.for_style(cfg)
    stages: list[str] = []
    mapping = None
    data = rec.data

    if cfg.style == "labram":
        keep = [i for i, n in enumerate(rec.channel_names) if global_index(n, GLOBAL_MONTAGE) is not None]
        if not keep:
            raise ValueError("no recording channel is present in the global electrode list")
        dropped = [rec.channel_names[i] for i in range(rec.n_channels) if i not in keep]
        rec = rec.with_data(
            data[keep],
            channel_names=tuple(rec.channel_names[i] for i in keep),
            channel_positions=rec.channel_positions[keep],
        )
        data = rec.data
        stages.append(f"select_channels(dropped={dropped})")

    data = resample(data, rec.fs, cfg.fs)
    stages.append(f"resample({rec.fs:g}->{cfg.fs:g}Hz)")
    fs = cfg.fs
    data = bandpass(data, cfg.band[0], cfg.band[1], fs, cfg.filter_order)
    stages.append(f"bandpass({cfg.band[0]:g}-{cfg.band[1]:g}Hz,order={cfg.filter_order})")
    for f0 in cfg.notches:
        if f0 >= fs / 2.0:
            stages.append(f"notch({f0:g}Hz,skipped:at_or_above_nyquist)")
            continue
        data = notch(data, f0, fs, cfg.notch_q)
        stages.append(f"notch({f0:g}Hz,q={cfg.notch_q:g})")
    rec = rec.with_data(data, fs=fs)

    if cfg.style == "neurogpt":
        rec, cmap = map_channels(rec, cfg.target or NEUROGPT_MONTAGE, cfg.threshold_mm)
        mapping = cmap.to_dict()
        stages.append(f"map_channels(n={len(cmap.target)},threshold={cfg.threshold_mm:g}mm)")

    rec = rec.with_data(car(rec.data))
    stages.append("car")
    return Preprocessed(rec, stages, mapping)


def pipeline(rec: Recording, style: str | PipelineConfig) -> ModelInput:
    cfg = PipelineConfig.for_style(style) if isinstance(style, str) else style
    pre = preprocess(rec, cfg)
    stages = list(pre.stages)
    patched = None
    if cfg.style == "labram":
        patched = patchify_labram(pre.recording, GLOBAL_MONTAGE, cfg.max_patches, cfg.fs)
        stages.append(f"patchify(max={cfg.max_patches})")
    return ModelInput(cfg.style, tuple(stages), pre.recording, patched, pre.mapping)


def stack_patched(items: list) -> dict[str, np.ndarray]:
    """Batch PatchedInputs into model input arrays."""
    return {
        "patches": np.stack([p.patches for p in items]),
        "temporal_index": np.stack([p.temporal_index for p in items]),
        "spatial_index": np.stack([p.spatial_index for p in items]),
        "attention_length": np.array([p.attention_length for p in items], dtype=np.int64),
    }
