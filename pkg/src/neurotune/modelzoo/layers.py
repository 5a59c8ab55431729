"""Layer modules.  Each module with parameters carries a ``kind`` tag used by
freezing, accounting and adapter injection.
"""

from __future__ import annotations

import math

import numpy as np

from ..diffcore import Module, Parameter, Tensor, ops

KINDS = ("conv", "attention_qkv", "attention_out", "fully_connected", "norm", "embedding", "head")


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) truncated to +-bound standard deviations by redrawing."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out * std


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """y = x W + b with W stored as (in_features, out_features)."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True, kind: str = "fully_connected"):
        super().__init__()
        self.kind = kind
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(np.zeros((in_features, out_features)))
        if bias:
            self.bias = Parameter(np.zeros(out_features))
        else:
            self.bias = None
        self.lora = None

    def reset_parameters(self, rng: np.random.Generator, std: float = 0.02) -> None:
        self.weight.data = trunc_normal(rng, self.weight.shape, std)
        if self.bias is not None:
            self.bias.data = np.zeros(self.out_features)

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight) if x.ndim >= 2 else None
        if y is None:
            raise ValueError("Linear expects at least 2-D input")
        if self.bias is not None:
            y = ops.add(y, self.bias)
        if self.lora is not None:
            y = ops.add(y, self.lora.linear_delta(x))
        return y


class Conv2d(Module):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0, groups=1, bias=True):
        super().__init__()
        kh, kw = (kernel_size, kernel_size) if isinstance(kernel_size, int) else tuple(kernel_size)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = (kh, kw)
        self.stride = stride
        self.padding = padding
        self.groups = groups
        self.weight = Parameter(np.zeros((out_channels, in_channels // groups, kh, kw)))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.lora = None

    @property
    def fan_in(self) -> int:
        kh, kw = self.kernel_size
        return (self.in_channels // self.groups) * kh * kw

    def reset_parameters(self, rng: np.random.Generator) -> None:
        self.weight.data = kaiming_uniform(rng, self.weight.shape, self.fan_in)
        if self.bias is not None:
            self.bias.data = kaiming_uniform(rng, (self.out_channels,), self.fan_in)

    def forward(self, x: Tensor) -> Tensor:
        if self.lora is not None:
            return self.lora.conv_forward(self, x)
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class LayerNorm(Module):
    kind = "norm"

    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.weight, self.bias, self.eps)


class GroupNorm(Module):
    kind = "norm"

    def __init__(self, groups: int, channels: int, eps: float = 1e-5):
        super().__init__()
        if channels % groups:
            raise ValueError(f"{channels} channels not divisible into {groups} groups")
        self.groups = groups
        self.eps = eps
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        b, c = x.shape[:2]
        rest = x.shape[2:]
        xg = ops.reshape(x, (b, self.groups, c // self.groups) + rest)
        xg = ops.normalize(xg, tuple(range(2, xg.ndim)), self.eps)
        x = ops.reshape(xg, x.shape)
        shape = (1, c) + (1,) * len(rest)
        return ops.add(ops.mul(x, ops.reshape(self.weight, shape)), ops.reshape(self.bias, shape))


class BatchNorm(Module):
    """Batch normalization over every axis except the channel axis 1."""

    kind = "norm"

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))

    def forward(self, x: Tensor) -> Tensor:
        c = x.shape[1]
        shape = (1, c) + (1,) * (x.ndim - 2)
        axes = (0,) + tuple(range(2, x.ndim))
        if self.training:
            xhat = ops.normalize(x, axes, self.eps)
            n = x.size // c
            batch_mean = x.data.mean(axis=axes)
            batch_var = x.data.var(axis=axes) * (n / max(n - 1, 1))
            object.__setattr__(self, "running_mean", (1 - self.momentum) * self.running_mean + self.momentum * batch_mean)
            object.__setattr__(self, "running_var", (1 - self.momentum) * self.running_var + self.momentum * batch_var)
        else:
            mean = self.running_mean.reshape(shape)
            inv = 1.0 / np.sqrt(self.running_var.reshape(shape) + self.eps)
            xhat = ops.mul(ops.sub(x, mean), inv)
        return ops.add(ops.mul(xhat, ops.reshape(self.weight, shape)), ops.reshape(self.bias, shape))


class Embedding(Module):
    kind = "embedding"

    def __init__(self, num: int, dim: int):
        super().__init__()
        self.weight = Parameter(np.zeros((num, dim)))

    def reset_parameters(self, rng: np.random.Generator, std: float = 0.02) -> None:
        self.weight.data = trunc_normal(rng, self.weight.shape, std)

    def forward(self, index: np.ndarray) -> Tensor:
        index = np.asarray(index, dtype=np.int64)
        if index.size and (index.min() < 0 or index.max() >= self.weight.shape[0]):
            raise IndexError(f"embedding index out of range [0, {self.weight.shape[0]})")
        return ops.getitem(self.weight, index)


class Dropout(Module):
    def __init__(self, p: float):
        super().__init__()
        self.p = p

    def forward(self, x: Tensor) -> Tensor:
        return ops.dropout(x, self.p, self._rng, self.training)


class Activation(Module):
    def __init__(self, name: str):
        super().__init__()
        if name not in ("elu", "gelu", "relu"):
            raise ValueError(f"unknown activation '{name}'")
        self.name = name

    def forward(self, x: Tensor) -> Tensor:
        return getattr(ops, self.name)(x)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)
        self._order = [str(i) for i in range(len(layers))]

    def __iter__(self):
        return (getattr(self, k) for k in self._order)

    def __len__(self) -> int:
        return len(self._order)

    def __getitem__(self, i: int) -> Module:
        return getattr(self, self._order[i])

    def forward(self, x):
        for layer in self:
            x = layer(x)
        return x


class Attention(Module):
    """Multi-head self-attention with a combined (d, 3d) qkv projection."""

    def __init__(self, dim: int, heads: int, qkv_bias: bool = True, causal: bool = False):
        super().__init__()
        if dim % heads:
            raise ValueError(f"embed dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.causal = causal
        self.qkv = Linear(dim, 3 * dim, bias=qkv_bias, kind="attention_qkv")
        self.proj = Linear(dim, dim, kind="attention_out")

    def forward(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        b, n, d = x.shape
        h = self.heads
        hd = d // h
        qkv = ops.reshape(self.qkv(x), (b, n, 3, h, hd))
        qkv = ops.transpose(qkv, (2, 0, 3, 1, 4))  # (3, b, h, n, hd)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.mul(ops.matmul(q, ops.swapaxes(k, -1, -2)), 1.0 / math.sqrt(hd))
        bias = np.zeros((1, 1, n, n))
        if self.causal:
            bias = bias + np.triu(np.full((n, n), -1e9), k=1)
        if key_mask is not None:
            bias = bias + np.where(np.asarray(key_mask, dtype=bool), 0.0, -1e9)[:, None, None, :]
        if self.causal or key_mask is not None:
            scores = ops.add(scores, bias)
        attn = ops.softmax(scores, axis=-1)
        out = ops.matmul(attn, v)  # (b, h, n, hd)
        out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (b, n, d))
        return self.proj(out)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, act: str = "gelu"):
        super().__init__()
        self.fc1 = Linear(dim, hidden)
        self.act = Activation(act)
        self.fc2 = Linear(hidden, dim)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(Module):
    """Pre-norm encoder block."""

    def __init__(self, dim: int, heads: int, mlp_dim: int, causal: bool = False, act: str = "gelu"):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, causal=causal)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_dim, act)

    def forward(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x = ops.add(x, self.attn(self.norm1(x), key_mask))
        return ops.add(x, self.mlp(self.norm2(x)))


def init_transformer(module: Module, rng: np.random.Generator, std: float = 0.02) -> None:
    """Seeded init in module order: truncated normal for linears and
    embeddings, Kaiming-uniform analog for convolutions."""
    for _, mod in module.named_modules():
        if isinstance(mod, (Linear, Embedding)):
            mod.reset_parameters(rng, std)
        elif isinstance(mod, Conv2d):
            mod.reset_parameters(rng)
