from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .montage import Montage
from .recording import Recording

DEFAULT_THRESHOLD_MM = 30.0


def car(trial) -> np.ndarray:
    """Common average reference: subtract the across-channel mean at every sample."""
    x = np.asarray(trial, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"CAR expects (channels, time), got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("CAR needs at least 2 channels (a single channel would be zeroed)")
    return x - x.mean(axis=0, keepdims=True)


@dataclass(frozen=True)
class ChannelMapping:
    """For each target channel: the source label copied (None = zero-filled) and distance in mm."""

    target: tuple[str, ...]
    source: tuple[str | None, ...]
    distance_mm: tuple[float | None, ...]

    def to_dict(self) -> dict:
        return {
            t: {"source": s, "distance_mm": d}
            for t, s, d in zip(self.target, self.source, self.distance_mm)
        }


def map_channels(
    rec: Recording, target: Montage, threshold_mm: float = DEFAULT_THRESHOLD_MM
) -> tuple[Recording, ChannelMapping]:
    """Reorder ``rec`` onto ``target``.

    A target label present in the recording is copied directly.  Otherwise the
    nearest recorded electrode is used if it lies within ``threshold_mm``;
    if not, the row is zero.
    """
    if len(target) == 0:
        raise ValueError("target channel list is empty")
    src_upper = [n.upper() for n in rec.channel_names]
    out = np.zeros((len(target), rec.n_samples))
    sources: list[str | None] = []
    dists: list[float | None] = []
    for i, (label, pos) in enumerate(target.entries):
        j = src_upper.index(label.upper()) if label.upper() in src_upper else None
        if j is not None:
            dist = float(np.linalg.norm(rec.channel_positions[j] - pos))
        elif rec.n_channels:
            d = np.linalg.norm(rec.channel_positions - pos, axis=1)
            j = int(np.argmin(d))
            dist = float(d[j])
            if dist > threshold_mm:
                j = None
        if j is None:
            sources.append(None)
            dists.append(None)
            continue
        out[i] = rec.data[j]
        sources.append(rec.channel_names[j])
        dists.append(dist)
    mapped = rec.with_data(out, channel_names=tuple(target.labels), channel_positions=target.positions.copy())
    return mapped, ChannelMapping(tuple(target.labels), tuple(sources), tuple(dists))
