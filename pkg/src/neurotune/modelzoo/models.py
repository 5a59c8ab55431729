"""Model families.  Every model is ``backbone features -> head``; the head is a
:class:`Sequential` whose linear layers are tagged ``kind="head"``.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import Module, Tensor, ops
from . import config as C
from .layers import (
    Activation,
    BatchNorm,
    Conv2d,
    Dropout,
    Embedding,
    GroupNorm,
    LayerNorm,
    Linear,
    Sequential,
    TransformerBlock,
    init_transformer,
)


def build_head(items: list[str], in_dim: int, n_cls: int) -> Sequential:
    layers: list[Module] = []
    width = in_dim
    for item in items:
        name, _, arg = item.partition(":")
        if name == "linear":
            out = n_cls if arg == "n_cls" else int(arg)
            layers.append(Linear(width, out, kind="head"))
            width = out
        elif name == "dropout":
            layers.append(Dropout(float(arg)))
        else:
            layers.append(Activation(name))
    return Sequential(*layers)


def _as_dict(inputs) -> dict:
    if isinstance(inputs, dict):
        return inputs
    return {"x": np.asarray(inputs, dtype=np.float64)}


class EEGModel(Module):
    """Common wrapper: ``features`` from the backbone, then the head."""

    input_keys: tuple[str, ...] = ("x",)

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    def features(self, inputs: dict) -> Tensor:
        raise NotImplementedError

    def forward(self, inputs) -> Tensor:
        return self.head(self.features(_as_dict(inputs)))

    def init_backbone(self, rng: np.random.Generator) -> None:
        for name, child in self.named_children():
            if name != "head":
                init_transformer(child, rng)

    def reset_head(self, rng: np.random.Generator, std: float = 0.02) -> None:
        init_transformer(self.head, rng, std)

    def example_input(self, batch: int = 2, rng: np.random.Generator | None = None) -> dict:
        raise NotImplementedError


# -- patch-token transformer ---------------------------------------------------

class TemporalConvStem(Module):
    """Per-patch temporal convolutions: (B, N, P) -> (B, N, filters * width)."""

    def __init__(self, cfg: C.LabramConfig):
        super().__init__()
        f = cfg.conv_filters
        k0 = cfg.conv_kernels[0]
        self.conv1 = Conv2d(1, f, (1, k0), stride=(1, cfg.conv_stride), padding=(0, k0 // 2))
        self.norm1 = GroupNorm(cfg.norm_groups, f)
        rest = []
        for i, k in enumerate(cfg.conv_kernels[1:], start=2):
            setattr(self, f"conv{i}", Conv2d(f, f, (1, k), padding=(0, k // 2)))
            setattr(self, f"norm{i}", GroupNorm(cfg.norm_groups, f))
            rest.append(i)
        self._rest = rest

    def forward(self, patches: Tensor) -> Tensor:
        b, n, p = patches.shape
        # each patch is its own sample so norm statistics never mix patches (padding stays inert)
        x = ops.reshape(patches, (b * n, 1, 1, p))
        x = ops.gelu(self.norm1(self.conv1(x)))
        for i in self._rest:
            x = ops.gelu(getattr(self, f"norm{i}")(getattr(self, f"conv{i}")(x)))
        _, f, _, w = x.shape
        return ops.reshape(x, (b, n, f * w))


class LabramLike(EEGModel):
    input_keys = ("patches", "temporal_index", "spatial_index", "attention_length")

    def __init__(self, cfg: C.LabramConfig):
        super().__init__(cfg)
        from ..signalprep.montage import GLOBAL_MONTAGE

        n_electrodes = cfg.n_electrodes or len(GLOBAL_MONTAGE)
        self.patch_embed = TemporalConvStem(cfg)
        self.temporal_embed = Embedding(cfg.max_seconds, cfg.embed_dim)
        self.spatial_embed = Embedding(n_electrodes, cfg.embed_dim)
        self.blocks = Sequential(*[TransformerBlock(cfg.embed_dim, cfg.heads, cfg.mlp_dim) for _ in range(cfg.depth)])
        self.fc_norm = LayerNorm(cfg.embed_dim)
        self.head = build_head(cfg.head, cfg.embed_dim, cfg.n_cls)

    @property
    def feature_dim(self) -> int:
        return self.cfg.embed_dim

    def features(self, inputs: dict) -> Tensor:
        patches = np.asarray(inputs["patches"], dtype=np.float64)
        b, n, p = patches.shape
        if p != self.cfg.patch_size or n > self.cfg.max_patches:
            raise ValueError(f"expected up to {self.cfg.max_patches} patches of {self.cfg.patch_size}, got {(n, p)}")
        length = np.asarray(inputs["attention_length"], dtype=np.int64).reshape(b)
        mask = np.arange(n)[None, :] < length[:, None]
        x = self.patch_embed(Tensor(patches))
        x = ops.add(x, self.temporal_embed(np.asarray(inputs["temporal_index"])[:, :n]))
        x = ops.add(x, self.spatial_embed(np.asarray(inputs["spatial_index"])[:, :n]))
        for blk in self.blocks:
            x = blk(x, mask)
        weights = mask / np.maximum(mask.sum(axis=1, keepdims=True), 1)
        pooled = ops.sum(ops.mul(x, weights[:, :, None]), axis=1)
        return self.fc_norm(pooled)

    def example_input(self, batch: int = 2, rng=None) -> dict:
        rng = rng or np.random.default_rng(0)
        n = self.cfg.max_patches
        lengths = rng.integers(1, n + 1, size=batch)
        return {
            "patches": rng.standard_normal((batch, n, self.cfg.patch_size)),
            "temporal_index": rng.integers(0, self.cfg.max_seconds, size=(batch, n)),
            "spatial_index": rng.integers(0, self.spatial_embed.weight.shape[0], size=(batch, n)),
            "attention_length": lengths,
        }


# -- conformer stem + GPT ------------------------------------------------------

class ConformerEncoder(Module):
    """Temporal conv, spatial conv, pooling, 1x1 projection, then self-attention.
    Maps (B, C, T_chunk) to (B, tokens, embed_dim)."""

    def __init__(self, cfg):
        super().__init__()
        f = cfg.temporal_filters
        self.cfg = cfg
        self.temporal_conv = Conv2d(1, f, (1, cfg.temporal_kernel))
        self.spatial_conv = Conv2d(f, f, (cfg.n_chans, 1))
        self.bn = BatchNorm(f)
        self.drop = Dropout(cfg.stem_dropout)
        self.projection = Conv2d(f, cfg.embed_dim, (1, 1))
        self.blocks = Sequential(
            *[TransformerBlock(cfg.embed_dim, cfg.heads, cfg.mlp_dim, act="elu") for _ in range(cfg.depth)]
        )

    def forward(self, x: Tensor) -> Tensor:
        b, c, t = x.shape
        h = ops.reshape(x, (b, 1, c, t))
        h = self.spatial_conv(self.temporal_conv(h))
        h = ops.elu(self.bn(h))
        h = ops.avg_pool_last(h, self.cfg.pool_window, self.cfg.pool_stride)
        h = self.projection(self.drop(h))  # (B, E, 1, tokens)
        h = ops.transpose(ops.reshape(h, (b, h.shape[1], h.shape[3])), (0, 2, 1))
        for blk in self.blocks:
            h = blk(h)
        return h


class _ChunkedConformer(EEGModel):
    def _encode_chunks(self, inputs: dict) -> Tensor:
        x = np.asarray(inputs["x"], dtype=np.float64)
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != cfg.n_chans or x.shape[2] != cfg.n_times:
            raise ValueError(f"expected input (B, {cfg.n_chans}, {cfg.n_times}), got {x.shape}")
        b = x.shape[0]
        chunks = x.reshape(b, cfg.n_chans, cfg.n_chunks, cfg.chunk_len).transpose(0, 2, 1, 3)
        tokens = self.encoder(Tensor(chunks.reshape(b * cfg.n_chunks, cfg.n_chans, cfg.chunk_len)))
        return ops.reshape(tokens, (b, cfg.n_chunks, -1))  # (B, chunks, tokens*E)

    def example_input(self, batch: int = 2, rng=None) -> dict:
        rng = rng or np.random.default_rng(0)
        return {"x": rng.standard_normal((batch, self.cfg.n_chans, self.cfg.n_times))}


class NeuroGPTEncoderLike(_ChunkedConformer):
    def __init__(self, cfg: C.NeuroGPTEncoderConfig):
        super().__init__(cfg)
        self.encoder = ConformerEncoder(cfg)
        self.head = build_head(cfg.head, cfg.feature_dim, cfg.n_cls)

    @property
    def feature_dim(self) -> int:
        return self.cfg.feature_dim

    def features(self, inputs: dict) -> Tensor:
        z = self._encode_chunks(inputs)
        return ops.reshape(z, (z.shape[0], -1))


class NeuroGPTFullLike(_ChunkedConformer):
    """Chunk encoder, linear embedding into a causal GPT, final-token readout."""

    def __init__(self, cfg: C.NeuroGPTFullConfig):
        super().__init__(cfg)
        self.encoder = ConformerEncoder(cfg)
        chunk_dim = cfg.tokens_per_chunk * cfg.embed_dim
        self.embed_in = Linear(chunk_dim, cfg.gpt_dim)
        self.position = Embedding(cfg.n_chunks, cfg.gpt_dim)
        self.gpt = Sequential(
            *[TransformerBlock(cfg.gpt_dim, cfg.gpt_heads, cfg.gpt_mlp_dim, causal=True) for _ in range(cfg.gpt_depth)]
        )
        self.gpt_norm = LayerNorm(cfg.gpt_dim)
        self.embed_out = Linear(cfg.gpt_dim, cfg.gpt_dim)
        self.head = build_head(cfg.head, cfg.gpt_dim, cfg.n_cls)

    @property
    def feature_dim(self) -> int:
        return self.cfg.gpt_dim

    def features(self, inputs: dict) -> Tensor:
        z = self._encode_chunks(inputs)
        b = z.shape[0]
        h = ops.add(self.embed_in(z), self.position(np.arange(self.cfg.n_chunks)))
        for blk in self.gpt:
            h = blk(h)
        h = self.embed_out(self.gpt_norm(h))
        return h[:, -1, :]


# -- compact convolutional baselines -------------------------------------------

def _same(k: int) -> tuple[int, int]:
    return ((k - 1) // 2, k // 2)


class EEGNetLike(EEGModel):
    def __init__(self, cfg: C.EEGNetConfig):
        super().__init__(cfg)
        f1, d, f2 = cfg.f1, cfg.depth_multiplier, cfg.f2
        self.conv_temporal = Conv2d(1, f1, (1, cfg.kernel_length), padding=(0, _same(cfg.kernel_length)), bias=False)
        self.bn1 = BatchNorm(f1)
        self.conv_spatial = Conv2d(f1, f1 * d, (cfg.n_chans, 1), groups=f1, bias=False)
        self.bn2 = BatchNorm(f1 * d)
        self.drop1 = Dropout(cfg.dropout)
        self.conv_separable_depth = Conv2d(
            f1 * d, f1 * d, (1, cfg.separable_kernel), padding=(0, _same(cfg.separable_kernel)), groups=f1 * d, bias=False
        )
        self.conv_separable_point = Conv2d(f1 * d, f2, (1, 1), bias=False)
        self.bn3 = BatchNorm(f2)
        self.drop2 = Dropout(cfg.dropout)
        self.head = build_head(cfg.head, cfg.feature_dim, cfg.n_cls)

    @property
    def feature_dim(self) -> int:
        return self.cfg.feature_dim

    def features(self, inputs: dict) -> Tensor:
        x = np.asarray(inputs["x"], dtype=np.float64)
        b, c, t = x.shape
        if c != self.cfg.n_chans or t != self.cfg.n_times:
            raise ValueError(f"expected input (B, {self.cfg.n_chans}, {self.cfg.n_times}), got {x.shape}")
        h = self.bn1(self.conv_temporal(Tensor(x.reshape(b, 1, c, t))))
        h = ops.elu(self.bn2(self.conv_spatial(h)))
        h = self.drop1(ops.avg_pool_last(h, self.cfg.pool1))
        h = self.conv_separable_point(self.conv_separable_depth(h))
        h = ops.elu(self.bn3(h))
        h = self.drop2(ops.avg_pool_last(h, self.cfg.pool2))
        return ops.flatten(h)

    def example_input(self, batch: int = 2, rng=None) -> dict:
        rng = rng or np.random.default_rng(0)
        return {"x": rng.standard_normal((batch, self.cfg.n_chans, self.cfg.n_times))}


class InceptionBranch(Module):
    def __init__(self, in_ch: int, filters: int, kernel: int, dropout: float, spatial_chans: int = 0, depth: int = 1):
        super().__init__()
        self.conv = Conv2d(in_ch, filters, (1, kernel), padding=(0, _same(kernel)))
        self.bn = BatchNorm(filters)
        self.drop = Dropout(dropout)
        self.spatial = None
        if spatial_chans:
            self.spatial = Conv2d(filters, filters * depth, (spatial_chans, 1), groups=filters, bias=False)
            self.bn_spatial = BatchNorm(filters * depth)
            self.drop_spatial = Dropout(dropout)

    def forward(self, x: Tensor) -> Tensor:
        h = self.drop(ops.elu(self.bn(self.conv(x))))
        if self.spatial is not None:
            h = self.drop_spatial(ops.elu(self.bn_spatial(self.spatial(h))))
        return h


class EEGInceptionLike(EEGModel):
    def __init__(self, cfg: C.EEGInceptionConfig):
        super().__init__(cfg)
        f, d = cfg.filters_per_branch, cfg.depth_multiplier
        n_br = len(cfg.scales)
        self.block1 = Sequential(*[InceptionBranch(1, f, k, cfg.dropout, cfg.n_chans, d) for k in cfg.scales])
        self.block2 = Sequential(
            *[InceptionBranch(f * d * n_br, f, max(k // 4, 1), cfg.dropout) for k in cfg.scales]
        )
        mid = f * n_br
        self.out_conv1 = Conv2d(mid, mid // 2, (1, 8), padding=(0, _same(8)), bias=False)
        self.out_bn1 = BatchNorm(mid // 2)
        self.out_conv2 = Conv2d(mid // 2, mid // 4, (1, 4), padding=(0, _same(4)), bias=False)
        self.out_bn2 = BatchNorm(mid // 4)
        self.drop = Dropout(cfg.dropout)
        self.head = build_head(cfg.head, cfg.feature_dim, cfg.n_cls)

    @property
    def feature_dim(self) -> int:
        return self.cfg.feature_dim

    def features(self, inputs: dict) -> Tensor:
        x = np.asarray(inputs["x"], dtype=np.float64)
        b, c, t = x.shape
        if c != self.cfg.n_chans or t != self.cfg.n_times:
            raise ValueError(f"expected input (B, {self.cfg.n_chans}, {self.cfg.n_times}), got {x.shape}")
        h = Tensor(x.reshape(b, 1, c, t))
        h = ops.concat([br(h) for br in self.block1], axis=1)
        h = ops.avg_pool_last(h, self.cfg.pool1)
        h = ops.concat([br(h) for br in self.block2], axis=1)
        h = ops.avg_pool_last(h, self.cfg.pool2)
        h = ops.avg_pool_last(ops.elu(self.out_bn1(self.out_conv1(h))), 2)
        h = ops.avg_pool_last(ops.elu(self.out_bn2(self.out_conv2(h))), 2)
        return ops.flatten(self.drop(h))

    def example_input(self, batch: int = 2, rng=None) -> dict:
        rng = rng or np.random.default_rng(0)
        return {"x": rng.standard_normal((batch, self.cfg.n_chans, self.cfg.n_times))}


FAMILIES = {
    "labram_like": LabramLike,
    "neurogpt_encoder_like": NeuroGPTEncoderLike,
    "neurogpt_full_like": NeuroGPTFullLike,
    "eegnet_like": EEGNetLike,
    "eeginception_like": EEGInceptionLike,
}


def build_model(cfg, seed: int | None = None) -> EEGModel:
    """Build and initialize a model from a config; same config and seed give
    bit-identical parameters."""
    if isinstance(cfg, dict):
        cfg = C.parse_model_config(cfg)
    model = FAMILIES[cfg.family](cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    model.init_backbone(rng)
    model.reset_head(rng)
    return model
