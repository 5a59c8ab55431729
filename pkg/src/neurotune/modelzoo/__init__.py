from .accounting import LayerCount, ParamReport, count, count_params, freeze, unfreeze
from .config import (
    REFERENCE_CONFIGS,
    EEGInceptionConfig,
    EEGNetConfig,
    LabramConfig,
    NeuroGPTEncoderConfig,
    NeuroGPTFullConfig,
    config_to_dict,
    load_model_config,
    parse_model_config,
)
from .layers import KINDS, Attention, Conv2d, Linear
from .models import FAMILIES, EEGModel, build_head, build_model

__all__ = [
    "Attention",
    "Conv2d",
    "EEGInceptionConfig",
    "EEGModel",
    "EEGNetConfig",
    "FAMILIES",
    "KINDS",
    "LabramConfig",
    "LayerCount",
    "Linear",
    "NeuroGPTEncoderConfig",
    "NeuroGPTFullConfig",
    "ParamReport",
    "REFERENCE_CONFIGS",
    "build_head",
    "build_model",
    "config_to_dict",
    "count",
    "count_params",
    "freeze",
    "load_model_config",
    "parse_model_config",
    "unfreeze",
]
