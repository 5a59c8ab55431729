from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Recording:
    """One multichannel segment: ``data`` is (channels, time) in float64."""

    data: np.ndarray
    fs: float
    channel_names: tuple[str, ...]
    channel_positions: np.ndarray
    subject_id: str = ""
    label: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"recording data must be (channels, time), got shape {data.shape}")
        names = tuple(self.channel_names)
        pos = np.asarray(self.channel_positions, dtype=np.float64).reshape(len(names), 3) if names else np.zeros((0, 3))
        if data.shape[0] != len(names) or pos.shape[0] != len(names):
            raise ValueError(f"{data.shape[0]} data rows but {len(names)} channel names / {pos.shape[0]} positions")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        if not np.isfinite(data).all():
            raise ValueError("recording contains non-finite samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "channel_positions", pos)
        object.__setattr__(self, "fs", float(self.fs))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def with_data(self, data: np.ndarray, **changes) -> "Recording":
        return replace(self, data=data, **changes)


@dataclass(frozen=True)
class FilterSpec:
    kind: str  # "bandpass" | "notch"
    fs: float
    lo: float | None = None
    hi: float | None = None
    center: float | None = None
    order: int = 4
    q: float = 30.0

    def __post_init__(self):
        nyq = self.fs / 2.0
        if self.kind == "bandpass":
            if self.lo is None or self.hi is None or not (0 < self.lo < self.hi < nyq):
                raise ValueError(f"bandpass corners must satisfy 0 < lo < hi < {nyq}, got ({self.lo}, {self.hi})")
        elif self.kind == "notch":
            if self.center is None or not (0 < self.center < nyq):
                raise ValueError(f"notch frequency must lie in (0, {nyq}), got {self.center}")
        else:
            raise ValueError(f"unknown filter kind '{self.kind}'")


@dataclass(frozen=True)
class PatchedInput:
    """Fixed-length token sequence of one-second patches (zero padded)."""

    patches: np.ndarray          # (max_patches, patch_len)
    temporal_index: np.ndarray   # (max_patches,) int
    spatial_index: np.ndarray    # (max_patches,) int
    attention_length: int
    fs: float = 200.0

    @property
    def valid_patches(self) -> np.ndarray:
        return self.patches[: self.attention_length]


@dataclass(frozen=True)
class ModelInput:
    """Output of a preprocessing pipeline: either patch tokens or a fixed
    channel-order recording, plus the ordered list of stages applied."""

    style: str
    stages: tuple[str, ...]
    recording: Recording
    patched: PatchedInput | None = None
    mapping: dict | None = None
