from __future__ import annotations

import numpy as np

from .montage import GLOBAL_MONTAGE, Montage, global_index
from .recording import PatchedInput, Recording

MAX_PATCHES = 256
PATCH_FS = 200.0


def patchify_labram(
    rec: Recording,
    montage: Montage = GLOBAL_MONTAGE,
    max_patches: int = MAX_PATCHES,
    fs: float = PATCH_FS,
) -> PatchedInput:
    """Cut a trial into one-second patches, channel-major.

    Channels missing from ``montage`` are dropped.  Sequences longer than
    ``max_patches`` keep their channel-major prefix; shorter ones are zero
    padded and ``attention_length`` marks the valid prefix.
    """
    if rec.fs != fs:
        raise ValueError(f"patching expects {fs} Hz input, got {rec.fs}")
    patch_len = int(round(fs))
    n_sec = rec.n_samples // patch_len
    rows: list[int] = []
    spatial: list[int] = []
    for c, name in enumerate(rec.channel_names):
        idx = global_index(name, montage)
        if idx is None:
            continue
        rows.append(c)
        spatial.append(idx)

    n_valid = min(len(rows) * n_sec, max_patches)
    patches = np.zeros((max_patches, patch_len))
    t_idx = np.zeros(max_patches, dtype=np.int64)
    s_idx = np.zeros(max_patches, dtype=np.int64)
    if n_sec:
        trimmed = rec.data[rows, : n_sec * patch_len].reshape(len(rows) * n_sec, patch_len)
        patches[:n_valid] = trimmed[:n_valid]
        t_idx[:n_valid] = np.tile(np.arange(n_sec), len(rows))[:n_valid]
        s_idx[:n_valid] = np.repeat(np.asarray(spatial, dtype=np.int64), n_sec)[:n_valid]
    return PatchedInput(patches, t_idx, s_idx, int(n_valid), fs)
