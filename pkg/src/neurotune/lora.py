"""Low-rank adapters.

An adapted weight W (d x k) is used as W + (alpha / r) * A @ B with A (d x r)
Gaussian-initialized and B (r x k) zero-initialized, so a freshly injected
model computes exactly what the base model computes.  Linear weights are
stored (in, out), so d = in_features.  Convolution kernels are viewed as
(out_channels) x (in_channels / groups * kh * kw).
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .diffcore import Module, Parameter, Tensor, load_checkpoint, ops, save_checkpoint
from .modelzoo.accounting import count, freeze
from .modelzoo.layers import Conv2d, Linear

log = logging.getLogger(__name__)

TARGET_KINDS = ("attention", "fully_connected", "conv")
_LAYER_KIND = {"attention": "attention_qkv", "fully_connected": "fully_connected", "conv": "conv"}
_ALIASES = {"fc": "fully_connected", "attn": "attention", "convolution": "conv"}
DEFAULT_RANKS = (1, 2, 4, 8, 16)


class LoraConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    targets: tuple[Literal["attention", "fully_connected", "conv"], ...] = TARGET_KINDS
    rank: int = Field(8, ge=1)
    conv_rank: Union[Literal["auto"], int] = "auto"
    alpha: float = 8.0
    dropout: float = Field(0.0, ge=0.0, lt=1.0)
    adapt_bias: Literal[False] = False
    init_std: float = 0.02
    seed: int = 0

    @field_validator("targets", mode="before")
    @classmethod
    def _aliases(cls, v):
        if isinstance(v, str):
            v = [v]
        out = []
        for item in v:
            item = _ALIASES.get(item, item)
            if item not in out:
                out.append(item)
        return tuple(sorted(out, key=TARGET_KINDS.index))

    @field_validator("conv_rank")
    @classmethod
    def _positive(cls, v):
        if isinstance(v, int) and v < 1:
            raise ValueError("conv_rank must be positive or 'auto'")
        return v

    @property
    def label(self) -> str:
        return "+".join(self.targets)


def max_conv_rank(d: int, k: int) -> int:
    """Largest power of two r with r * (d + k) <= d * k."""
    if d < 1 or k < 1:
        raise ValueError("weight dimensions must be positive")
    if d + k > d * k:
        raise ValueError(f"weight too small to adapt: {d} x {k} has fewer entries than a rank-1 adapter")
    r = 1
    while 2 * r * (d + k) <= d * k:
        r *= 2
    return r


def weight_dims(layer: Module) -> tuple[int, int]:
    """(d, k) of the matrix an adapter on ``layer`` factorizes."""
    if isinstance(layer, Linear):
        return layer.in_features, layer.out_features
    if isinstance(layer, Conv2d):
        w = layer.weight.shape
        return w[0], w[1] * w[2] * w[3]
    raise TypeError(f"cannot adapt layer of type {type(layer).__name__}")


class Adapter(Module):
    kind = "lora"

    def __init__(self, target: str, d: int, k: int, rank: int, alpha: float, dropout: float, conv_shape=None):
        super().__init__()
        self.target = target
        self.rank = rank
        self.alpha = alpha
        self.p = dropout
        self.conv_shape = conv_shape
        self.A = Parameter(np.zeros((d, rank)))
        self.B = Parameter(np.zeros((rank, k)))

    @property
    def scale(self) -> float:
        return self.alpha / self.rank

    @property
    def n_params(self) -> int:
        d, r = self.A.shape
        return r * (d + self.B.shape[1])

    def delta(self) -> Tensor:
        """Scaled update in the base weight's own layout."""
        dw = ops.mul(ops.matmul(self.A, self.B), self.scale)
        if self.conv_shape is not None:
            dw = ops.reshape(dw, self.conv_shape)
        return dw

    def delta_array(self) -> np.ndarray:
        dw = self.scale * (self.A.data @ self.B.data)
        return dw.reshape(self.conv_shape) if self.conv_shape is not None else dw

    def linear_delta(self, x: Tensor) -> Tensor:
        h = ops.dropout(x, self.p, self._rng, self.training)
        return ops.mul(ops.matmul(ops.matmul(h, self.A), self.B), self.scale)

    def conv_forward(self, conv: Conv2d, x: Tensor) -> Tensor:
        if self.training and self.p > 0.0:
            base = ops.conv2d(x, conv.weight, conv.bias, conv.stride, conv.padding, conv.groups)
            h = ops.dropout(x, self.p, self._rng, True)
            return ops.add(base, ops.conv2d(h, self.delta(), None, conv.stride, conv.padding, conv.groups))
        weight = ops.add(conv.weight, self.delta())
        return ops.conv2d(x, weight, conv.bias, conv.stride, conv.padding, conv.groups)


@dataclass
class AdaptedModel:
    model: Module
    adapters: dict[str, Adapter]
    config: LoraConfig
    conv_rank: int | None

    def __call__(self, inputs):
        return self.model(inputs)

    def train(self, mode: bool = True):
        self.model.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def set_rng(self, rng):
        self.model.set_rng(rng)
        return self

    def adapter_params(self) -> int:
        return sum(a.n_params for a in self.adapters.values())

    def head_params(self) -> int:
        return sum(
            int(p.size) for _, m in self.model.named_modules() if m.kind == "head" for _, p in m.direct_parameters()
            if p.requires_grad
        )

    def formula_count(self) -> int:
        """Sum of r(d + k) over adapters plus the trainable head."""
        return self.adapter_params() + self.head_params()

    def breakdown(self) -> dict[str, int]:
        out = {"head": self.head_params()}
        for a in self.adapters.values():
            out[a.target_kind] = out.get(a.target_kind, 0) + a.n_params
        return out


def _target_layers(model: Module, kind: str) -> list[tuple[str, Module]]:
    layer_kind = _LAYER_KIND[kind]
    return [(name, m) for name, m in model.named_modules() if m.kind == layer_kind and isinstance(m, (Linear, Conv2d))]


def model_conv_rank(model: Module) -> int:
    """Model-wide conv rank: the smallest per-layer power-of-two bound, so no
    conv adapter outgrows its kernel."""
    layers = _target_layers(model, "conv")
    if not layers:
        raise ValueError("model has no convolution layers")
    return min(max_conv_rank(*weight_dims(m)) for _, m in layers)


def inject(model: Module, cfg: LoraConfig, rng: np.random.Generator | None = None) -> AdaptedModel:
    """Freeze the backbone and attach one adapter per targeted weight (in place)."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    plan: list[tuple[str, str, Module]] = []
    for kind in cfg.targets:
        layers = _target_layers(model, kind)
        if not layers:
            raise ValueError(f"adapter target '{kind}' not present in model")
        plan.extend((kind, name, layer) for name, layer in layers)

    conv_rank = None
    if "conv" in cfg.targets:
        conv_rank = model_conv_rank(model) if cfg.conv_rank == "auto" else int(cfg.conv_rank)

    freeze(model, "backbone")
    adapters: dict[str, Adapter] = {}
    for kind, name, layer in plan:
        if layer.lora is not None:
            raise ValueError(f"layer '{name}' already carries an adapter")
        d, k = weight_dims(layer)
        r = conv_rank if kind == "conv" else cfg.rank
        if r > min(d, k):
            log.warning("rank %d exceeds min(d, k) = %d for %s; refusing to clamp", r, min(d, k), name)
            raise ValueError(f"rank {r} exceeds min(d, k) = {min(d, k)} for '{name}' ({d} x {k})")
        conv_shape = layer.weight.shape if isinstance(layer, Conv2d) else None
        adapter = Adapter(name, d, k, r, cfg.alpha, cfg.dropout, conv_shape)
        adapter.target_kind = kind
        adapter.A.data = rng.normal(0.0, cfg.init_std, size=(d, r))
        layer.lora = adapter
        object.__setattr__(adapter, "_rng", getattr(layer, "_rng", None))
        adapter.train(layer.training)
        adapters[name] = adapter
    return AdaptedModel(model, adapters, cfg, conv_rank)


def trainable_param_count(am: AdaptedModel) -> int:
    """Brute-force count over every tensor with requires_grad."""
    return count(am.model, "trainable")


def merge(am: AdaptedModel) -> Module:
    """Return a copy of the model with every update folded into its base weight."""
    merged = copy.deepcopy(am.model)
    for name in am.adapters:
        layer = merged.get_submodule(name)
        adapter = layer.lora
        layer.weight.data = layer.weight.data + adapter.delta_array()
        layer.lora = None
        layer._children.pop("lora", None)
    return merged


def remove(am: AdaptedModel) -> Module:
    """Detach adapters without merging (restores the base function)."""
    for name in am.adapters:
        layer = am.model.get_submodule(name)
        layer.lora = None
        layer._children.pop("lora", None)
    return am.model


def adapter_state(am: AdaptedModel) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for name, a in am.adapters.items():
        out[f"{name}.lora.A"] = a.A.data.copy()
        out[f"{name}.lora.B"] = a.B.data.copy()
    return out


def save_adapters(am: AdaptedModel, path) -> None:
    """Write adapter matrices as ``<layer>.lora.A`` / ``<layer>.lora.B`` tensors."""
    save_checkpoint(path, adapter_state(am))


def load_adapters(am: AdaptedModel, path) -> None:
    state = load_checkpoint(path)
    expected = set(adapter_state(am))
    if set(state) != expected:
        raise KeyError(f"adapter checkpoint mismatch: missing={sorted(expected - set(state))} "
                       f"unexpected={sorted(set(state) - expected)}")
    for name, a in am.adapters.items():
        for part in ("A", "B"):
            value = state[f"{name}.lora.{part}"]
            tensor = getattr(a, part)
            if value.shape != tensor.shape:
                raise ValueError(f"shape mismatch for {name}.lora.{part}: {value.shape} vs {tensor.shape}")
            tensor.data = value.astype(np.float64)
