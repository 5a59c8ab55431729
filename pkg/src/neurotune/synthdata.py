"""Deterministic synthetic EEG-like trials with known class structure.

Each trial is 1/f-ish background noise plus a class-specific sinusoid on a
subset of channels, all scaled by a per-subject gain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import TrialSet
from .signalprep.montage import GLOBAL_LABELS, NEUROGPT_CHANNELS, electrode_position

# central/parietal sites first so small montages stay over motor cortex
_PREFERRED = ("F3", "F4", "C3", "C4", "Cz", "P3", "P4", "Pz", "Fz", "O1", "O2", "Fp1", "Fp2", "F7", "F8")


def default_channel_names(n: int) -> tuple[str, ...]:
    order = list(_PREFERRED)
    for lab in list(NEUROGPT_CHANNELS) + list(GLOBAL_LABELS):
        if lab not in order:
            order.append(lab)
    if n > len(order):
        raise ValueError(f"at most {len(order)} synthetic channels supported")
    return tuple(order[:n])


@dataclass(frozen=True)
class ClassSpec:
    freq: float
    channels: tuple[int, ...]
    amplitude: float = 1.0


def _default_classes() -> tuple[ClassSpec, ...]:
    return (ClassSpec(10.0, (0, 2, 5)), ClassSpec(22.0, (1, 3, 6)))


@dataclass(frozen=True)
class SynthSpec:
    subjects: int = 20
    trials_per_subject: int = 30
    channels: int = 8
    fs: float = 200.0
    duration_s: float = 4.0
    classes: tuple[ClassSpec, ...] = field(default_factory=_default_classes)
    noise_std: float = 1.0
    gain_jitter: float = 0.2
    seed: int = 0
    octaves: int = 6

    def __post_init__(self):
        if self.subjects < 1 or self.trials_per_subject < 1 or self.channels < 1:
            raise ValueError("need at least one subject, trial and channel")
        if len(self.classes) < 2:
            raise ValueError("need at least two classes")
        if self.n_samples < 1:
            raise ValueError("duration too short for one sample")
        if self.noise_std < 0 or not 0 <= self.gain_jitter < 1:
            raise ValueError("noise_std must be >= 0 and gain_jitter in [0, 1)")
        for c in self.classes:
            if not 0 < c.freq < self.fs / 2:
                raise ValueError(f"class frequency {c.freq} Hz outside (0, fs/2)")
            if c.amplitude <= 0:
                raise ValueError("class amplitudes must be positive")
            if not c.channels or min(c.channels) < 0 or max(c.channels) >= self.channels:
                raise ValueError(f"class channel subset {c.channels} out of range")

    @property
    def n_samples(self) -> int:
        return int(round(self.fs * self.duration_s))

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        if "classes" in d:
            d["classes"] = tuple(ClassSpec(c["freq"], tuple(c["channels"]), c.get("amplitude", 1.0)) for c in d["classes"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["classes"] = [{"freq": c.freq, "channels": list(c.channels), "amplitude": c.amplitude} for c in self.classes]
        return out


def pink_noise(rng: np.random.Generator, shape: tuple[int, int], octaves: int) -> np.ndarray:
    """Sum of octave-spaced white noise layers, each held and linearly
    interpolated at half the rate of the previous one.  Unit variance-ish."""
    c, n = shape
    out = np.zeros(shape)
    t = np.arange(n)
    for j in range(octaves):
        step = 2**j
        knots = np.arange(0, n + step, step)
        vals = rng.standard_normal((c, knots.size))
        out += np.stack([np.interp(t, knots, v) for v in vals])
    return out / np.sqrt(octaves)


def generate(spec: SynthSpec | None = None) -> TrialSet:
    spec = spec or SynthSpec()
    rng = np.random.default_rng(spec.seed)
    n_cls = len(spec.classes)
    t = np.arange(spec.n_samples) / spec.fs
    X, y, subj = [], [], []
    for s in range(spec.subjects):
        gain = 1.0 + spec.gain_jitter * rng.uniform(-1.0, 1.0)
        labels = rng.permutation(np.arange(spec.trials_per_subject) % n_cls)
        for lab in labels:
            cls = spec.classes[lab]
            trial = np.zeros((spec.channels, spec.n_samples))
            if spec.noise_std > 0:
                trial += spec.noise_std * pink_noise(rng, trial.shape, spec.octaves)
            phase = rng.uniform(0, 2 * np.pi)
            trial[list(cls.channels)] += cls.amplitude * np.sin(2 * np.pi * cls.freq * t + phase)
            X.append(gain * trial)
            y.append(int(lab))
            subj.append(s)
    names = default_channel_names(spec.channels)
    positions = np.stack([electrode_position(n) for n in names])
    return TrialSet(np.stack(X), y, np.array(subj), spec.fs, names, positions, {"synth": spec.to_dict()})
