"""EEGD trial container: ``meta.json`` plus raw little-endian float32 ``data.bin``.

Trials are stored trial-major, each trial a row-major channels x samples
block.  ``offset`` is the byte offset of a trial inside ``data.bin``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io_util import atomic_write_bytes, atomic_write_text

SCHEMA_VERSION = 1
META_NAME = "meta.json"
DATA_NAME = "data.bin"
_DTYPE = np.dtype("<f4")


class ContainerError(ValueError):
    """Malformed or missing container files."""


@dataclass
class TrialSet:
    """Equal-length labeled trials with channel metadata.

    X is (trials, channels, samples) float32; positions are in millimetres.
    """

    X: np.ndarray
    y: np.ndarray
    subjects: np.ndarray
    fs: float
    channel_names: tuple[str, ...]
    positions: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.subjects = np.asarray(self.subjects)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.channel_names = tuple(self.channel_names)
        if self.X.ndim != 3:
            raise ValueError(f"X must be (trials, channels, samples), got {self.X.shape}")
        n, c, _ = self.X.shape
        if self.y.shape != (n,) or self.subjects.shape != (n,):
            raise ValueError("labels and subjects need one entry per trial")
        if len(self.channel_names) != c or self.positions.shape != (c, 3):
            raise ValueError("channel names/positions do not match channel count")
        if self.fs <= 0:
            raise ValueError("fs must be positive")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_channels(self) -> int:
        return self.X.shape[1]

    @property
    def n_samples(self) -> int:
        return self.X.shape[2]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0

    @property
    def subject_ids(self) -> list:
        return sorted(set(self.subjects.tolist()))

    def subset(self, idx) -> "TrialSet":
        idx = np.asarray(idx)
        return TrialSet(self.X[idx], self.y[idx], self.subjects[idx], self.fs, self.channel_names, self.positions, dict(self.meta))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.X.astype(_DTYPE, copy=False).tobytes())
        h.update(self.y.tobytes())
        h.update(json.dumps([self.subjects.tolist(), self.fs, list(self.channel_names)]).encode())
        return h.hexdigest()[:16]

    def recordings(self):
        from .signalprep import Recording

        for i in range(len(self)):
            yield Recording(
                data=self.X[i].astype(np.float64),
                fs=float(self.fs),
                channel_names=self.channel_names,
                channel_positions=self.positions,
                subject_id=self.subjects[i].item(),
                label=int(self.y[i]),
            )


def _meta_dict(ts: TrialSet) -> dict:
    block = ts.n_channels * ts.n_samples * _DTYPE.itemsize
    return {
        "schema_version": SCHEMA_VERSION,
        "fs": float(ts.fs),
        "n_samples": ts.n_samples,
        "channels": [
            {"name": name, "position_mm": [float(v) for v in pos]} for name, pos in zip(ts.channel_names, ts.positions)
        ],
        "subjects": ts.subject_ids,
        "trials": [
            {"subject_id": s, "label": int(lab), "offset": i * block}
            for i, (s, lab) in enumerate(zip(ts.subjects.tolist(), ts.y.tolist()))
        ],
        "extra": ts.meta,
    }


def write_container(path, ts: TrialSet) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(path / DATA_NAME, ts.X.astype(_DTYPE, copy=False).tobytes())
    atomic_write_text(path / META_NAME, json.dumps(_meta_dict(ts), indent=2, sort_keys=True) + "\n")
    return path


def read_container(path) -> TrialSet:
    path = Path(path)
    meta_path, data_path = path / META_NAME, path / DATA_NAME
    if not path.is_dir():
        raise ContainerError(f"container directory not found: {path}")
    for p in (meta_path, data_path):
        if not p.is_file():
            raise ContainerError(f"missing container file: {p}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ContainerError(f"{meta_path}: invalid JSON ({exc})") from exc
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ContainerError(f"{meta_path}: unsupported schema_version {meta.get('schema_version')!r}")
    try:
        fs = float(meta["fs"])
        n_samples = int(meta["n_samples"])
        channels = meta["channels"]
        trials = meta["trials"]
        names = [ch["name"] for ch in channels]
        positions = np.array([ch["position_mm"] for ch in channels], dtype=np.float64).reshape(len(channels), 3)
        subjects = [t["subject_id"] for t in trials]
        labels = [int(t["label"]) for t in trials]
        offsets = [int(t["offset"]) for t in trials]
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"{meta_path}: malformed metadata ({exc})") from exc
    listed = set(meta.get("subjects", subjects))
    if not set(subjects) <= listed:
        raise ContainerError(f"{meta_path}: trial subject ids missing from subject list")
    block = len(channels) * n_samples * _DTYPE.itemsize
    if any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ContainerError(f"{meta_path}: trial offsets must be strictly increasing")
    payload = data_path.read_bytes()
    if len(payload) != block * len(trials):
        raise ContainerError(f"{data_path}: size {len(payload)} bytes, expected {block * len(trials)}")
    if offsets != [i * block for i in range(len(trials))]:
        raise ContainerError(f"{meta_path}: offsets do not tile data.bin")
    X = np.frombuffer(payload, dtype=_DTYPE).reshape(len(trials), len(channels), n_samples)
    return TrialSet(X.astype(np.float32), labels, np.array(subjects), fs, names, positions, meta.get("extra", {}))
