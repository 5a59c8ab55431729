from .filters import bandpass, notch, powerline_frequencies, resample
from .montage import (
    GLOBAL_MONTAGE,
    NEUROGPT_CHANNELS,
    NEUROGPT_MONTAGE,
    Montage,
    canonical_label,
    electrode_position,
    global_index,
)
from .patching import patchify_labram
from .pipeline import PipelineConfig, Preprocessed, pipeline, preprocess, stack_patched
from .recording import FilterSpec, ModelInput, PatchedInput, Recording
from .spatial import ChannelMapping, car, map_channels

__all__ = [
    "ChannelMapping",
    "FilterSpec",
    "GLOBAL_MONTAGE",
    "ModelInput",
    "Montage",
    "NEUROGPT_CHANNELS",
    "NEUROGPT_MONTAGE",
    "PatchedInput",
    "PipelineConfig",
    "Preprocessed",
    "Recording",
    "bandpass",
    "canonical_label",
    "car",
    "electrode_position",
    "global_index",
    "map_channels",
    "notch",
    "patchify_labram",
    "pipeline",
    "powerline_frequencies",
    "preprocess",
    "resample",
    "stack_patched",
]
