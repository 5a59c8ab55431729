"""Declarative model configs.

Configs are JSON objects with a ``family`` discriminator.  Unknown keys are
rejected.  Head layer lists use short strings: ``"linear:256"``,
``"linear:n_cls"``, ``"dropout:0.5"``, ``"elu"``.
"""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

LABRAM_HEAD = ["dropout:0.5", "linear:n_cls"]
NEUROGPT_FULL_HEAD = ["linear:256", "elu", "dropout:0.5", "linear:32", "elu", "dropout:0.3", "linear:n_cls"]
NEUROGPT_ENCODER_HEAD = ["linear:256", "elu", "dropout:0.5", "linear:32", "elu", "linear:n_cls"]
PLAIN_HEAD = ["linear:n_cls"]


def _check_head(head: list[str]) -> list[str]:
    if not head or not head[-1].startswith("linear:"):
        raise ValueError("head must end with a linear layer")
    for item in head:
        name, _, arg = item.partition(":")
        if name == "linear":
            if arg != "n_cls" and not (arg.isdigit() and int(arg) > 0):
                raise ValueError(f"bad linear width in head item '{item}'")
        elif name == "dropout":
            p = float(arg)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout probability out of range in '{item}'")
        elif name not in ("elu", "gelu", "relu"):
            raise ValueError(f"unknown head item '{item}'")
    return head


class _Base(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = ""
    n_cls: int = Field(2, ge=1)
    seed: int = 0

    @field_validator("head", check_fields=False)
    @classmethod
    def _valid_head(cls, v):
        return _check_head(list(v))


class LabramConfig(_Base):
    family: Literal["labram_like"] = "labram_like"
    patch_size: int = 200
    max_patches: int = 256
    max_seconds: int = 16
    n_electrodes: int | None = None  # defaults to the global montage size
    conv_filters: int = 8
    conv_kernels: list[int] = [15, 3, 3]
    conv_stride: int = 8
    norm_groups: int = 4
    embed_dim: int = 200
    depth: int = 4
    heads: int = 4
    mlp_dim: int = 800
    head: list[str] = LABRAM_HEAD

    @property
    def conv_out_width(self) -> int:
        k = self.conv_kernels[0]
        return (self.patch_size + 2 * (k // 2) - k) // self.conv_stride + 1

    @model_validator(mode="after")
    def _dims(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.conv_filters * self.conv_out_width != self.embed_dim:
            raise ValueError(
                f"conv stem gives {self.conv_filters} x {self.conv_out_width} features, embed_dim is {self.embed_dim}"
            )
        if self.conv_filters % self.norm_groups:
            raise ValueError("conv_filters not divisible by norm_groups")
        return self


class _ConformerStem(_Base):
    n_chans: int = 22
    chunk_len: int = 500
    n_chunks: int = 2
    temporal_filters: int = 40
    temporal_kernel: int = 25
    pool_window: int = 75
    pool_stride: int = 15
    stem_dropout: float = 0.5
    embed_dim: int = 40
    depth: int = 6
    heads: int = 10
    mlp_dim: int = 160

    @property
    def n_times(self) -> int:
        return self.chunk_len * self.n_chunks

    @property
    def tokens_per_chunk(self) -> int:
        return (self.chunk_len - self.temporal_kernel + 1 - self.pool_window) // self.pool_stride + 1

    @model_validator(mode="after")
    def _stem_dims(self):
        if self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.tokens_per_chunk < 1:
            raise ValueError("chunk_len too short for the temporal kernel and pooling window")
        return self


class NeuroGPTEncoderConfig(_ConformerStem):
    family: Literal["neurogpt_encoder_like"] = "neurogpt_encoder_like"
    head: list[str] = NEUROGPT_ENCODER_HEAD

    @property
    def feature_dim(self) -> int:
        return self.n_chunks * self.tokens_per_chunk * self.embed_dim


class NeuroGPTFullConfig(_ConformerStem):
    family: Literal["neurogpt_full_like"] = "neurogpt_full_like"
    gpt_dim: int = 1024
    gpt_depth: int = 6
    gpt_heads: int = 16
    gpt_mlp_dim: int = 4096
    head: list[str] = NEUROGPT_FULL_HEAD

    @property
    def feature_dim(self) -> int:
        return self.gpt_dim

    @model_validator(mode="after")
    def _gpt_dims(self):
        if self.gpt_dim % self.gpt_heads:
            raise ValueError(f"gpt_dim {self.gpt_dim} not divisible by gpt_heads {self.gpt_heads}")
        return self


class EEGNetConfig(_Base):
    family: Literal["eegnet_like"] = "eegnet_like"
    n_chans: int = 8
    n_times: int = 800
    f1: int = 8
    depth_multiplier: int = 2
    f2: int = 16
    kernel_length: int = 64
    separable_kernel: int = 16
    pool1: int = 4
    pool2: int = 8
    dropout: float = 0.25
    head: list[str] = PLAIN_HEAD

    @property
    def feature_dim(self) -> int:
        return self.f2 * ((self.n_times // self.pool1) // self.pool2)


class EEGInceptionConfig(_Base):
    family: Literal["eeginception_like"] = "eeginception_like"
    n_chans: int = 8
    n_times: int = 800
    scales: list[int] = [64, 32, 16]
    filters_per_branch: int = 8
    depth_multiplier: int = 2
    dropout: float = 0.25
    pool1: int = 4
    pool2: int = 2
    head: list[str] = PLAIN_HEAD

    @property
    def feature_dim(self) -> int:
        t = self.n_times // self.pool1 // self.pool2 // 2 // 2
        return (self.filters_per_branch * len(self.scales) // 4) * t


ModelConfig = Annotated[
    Union[LabramConfig, NeuroGPTEncoderConfig, NeuroGPTFullConfig, EEGNetConfig, EEGInceptionConfig],
    Field(discriminator="family"),
]
_adapter = TypeAdapter(ModelConfig)

REFERENCE_CONFIGS = (
    "labram_like_reference",
    "labram_like_large",
    "neurogpt_encoder_like_reference",
    "neurogpt_encoder_like_large",
    "neurogpt_full_like_reference",
    "neurogpt_full_like_large",
    "eegnet_like_reference",
    "eeginception_like_reference",
)


def parse_model_config(data: dict) -> ModelConfig:
    return _adapter.validate_python(data)


def load_model_config(ref: str | os.PathLike, **overrides) -> ModelConfig:
    """Load a config by bundled name (``labram_like_reference``) or file path."""
    ref_str = str(ref)
    path = Path(ref_str)
    if path.suffix == ".json" and path.exists():
        data = json.loads(path.read_text())
    elif ref_str in REFERENCE_CONFIGS:
        data = json.loads(resources.files("neurotune.modelzoo").joinpath(f"configs/{ref_str}.json").read_text())
    else:
        raise FileNotFoundError(f"no model config named or located at '{ref_str}'")
    data.update(overrides)
    return parse_model_config(data)


def config_to_dict(cfg) -> dict:
    return cfg.model_dump(mode="json")
