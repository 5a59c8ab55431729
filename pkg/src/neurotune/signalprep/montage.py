"""Electrode montages on an idealized spherical head (radius 85 mm).

Positions follow the 10-10 layout: the Fpz-T7-Oz-T8 ring lies on the
equator, midline rows sit at 22.5 degree steps from Cz, and lateral
electrodes are spaced evenly along the great circle joining a row's midline
point to its equatorial end (for example Fz -> F7).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEAD_RADIUS_MM = 85.0

# row -> (midline inclination from vertex in degrees, front/back sign, equatorial azimuth from nose in degrees)
_ROWS = {
    "AF": (67.5, 1, 36.0),
    "F": (45.0, 1, 54.0),
    "FC": (22.5, 1, 72.0),
    "C": (0.0, 1, 90.0),
    "CP": (22.5, -1, 108.0),
    "P": (45.0, -1, 126.0),
    "PO": (67.5, -1, 144.0),
}
_EDGE_NAMES = {"AF": "AF", "F": "F", "FC": "FT", "C": "T", "CP": "TP", "P": "P", "PO": "PO"}
_LEGACY = {"T3": "T7", "T4": "T8", "T5": "P7", "T6": "P8"}


def _sph(inclination_deg: float, azimuth_deg: float) -> np.ndarray:
    """Unit vector; x toward nose, y toward left ear, z up; azimuth positive to the left."""
    th = np.radians(inclination_deg)
    ph = np.radians(azimuth_deg)
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    omega = np.arccos(np.clip(a @ b, -1.0, 1.0))
    if omega < 1e-12:
        return a
    return (np.sin((1 - t) * omega) * a + np.sin(t * omega) * b) / np.sin(omega)


def _midline_vec(row: str) -> np.ndarray:
    incl, sign, _ = _ROWS[row]
    return _sph(incl, 0.0 if sign > 0 else 180.0)


def _build_positions() -> dict[str, np.ndarray]:
    pos: dict[str, np.ndarray] = {}
    pos["Fpz"] = _sph(90, 0)
    pos["Fp1"] = _sph(90, 18)
    pos["Fp2"] = _sph(90, -18)
    pos["Oz"] = _sph(90, 180)
    pos["O1"] = _sph(90, 162)
    pos["O2"] = _sph(90, -162)
    pos["Nz"] = _sph(108, 0)
    pos["Iz"] = _sph(108, 180)
    for row, (_, _, eq_az) in _ROWS.items():
        mid = _midline_vec(row)
        pos[f"{row}z" if row != "C" else "Cz"] = mid
        indices = (3, 4, 7, 8) if row in ("AF", "PO") else range(1, 9)
        for n in indices:
            side = 1 if n % 2 else -1
            edge = _sph(90, side * eq_az)
            step = (n + 1) // 2
            label = f"{_EDGE_NAMES[row]}{n}" if step == 4 else f"{row}{n}"
            pos[label] = _slerp(mid, edge, step / 4.0)
    # inferior temporal ring (10 percent below the equator)
    for n, az in ((9, 54.0), (10, -54.0)):
        pos[f"F{n}"] = _sph(108, az)
    for n, az in ((9, 72.0), (10, -72.0)):
        pos[f"FT{n}"] = _sph(108, az)
    for n, az in ((9, 90.0), (10, -90.0)):
        pos[f"T{n}"] = _sph(108, az)
    for n, az in ((9, 108.0), (10, -108.0)):
        pos[f"TP{n}"] = _sph(108, az)
    for n, az in ((9, 126.0), (10, -126.0)):
        pos[f"P{n}"] = _sph(108, az)
    # TUH anterior temporal electrodes, placed at FT9/FT10
    pos["T1"] = pos["FT9"]
    pos["T2"] = pos["FT10"]
    for old, new in _LEGACY.items():
        pos[old] = pos[new]
    return {k: v * HEAD_RADIUS_MM for k, v in pos.items()}


STANDARD_POSITIONS: dict[str, np.ndarray] = _build_positions()
_LOOKUP = {k.upper(): k for k in STANDARD_POSITIONS}


def canonical_label(label: str) -> str:
    """Map a label to its canonical 10-10 spelling (case-insensitive; legacy T3/T4/T5/T6 kept)."""
    key = label.strip().upper().replace("EEG ", "").replace("-REF", "").replace("-LE", "")
    if key not in _LOOKUP:
        raise KeyError(f"unknown electrode label '{label}'")
    return _LOOKUP[key]


def electrode_position(label: str) -> np.ndarray:
    return STANDARD_POSITIONS[canonical_label(label)].copy()


@dataclass(frozen=True)
class Montage:
    """Ordered (label, position in mm) entries with unique labels."""

    labels: tuple[str, ...]
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.shape != (len(self.labels), 3):
            raise ValueError(f"positions shape {pos.shape} does not match {len(self.labels)} labels")
        if len({lab.upper() for lab in self.labels}) != len(self.labels):
            raise ValueError("montage labels must be unique")
        if not np.isfinite(pos).all():
            raise ValueError("montage positions must be finite")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_labels(cls, labels) -> "Montage":
        labels = tuple(labels)
        return cls(labels, np.array([electrode_position(lab) for lab in labels]).reshape(len(labels), 3))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int | None:
        upper = label.upper()
        for i, lab in enumerate(self.labels):
            if lab.upper() == upper:
                return i
        return None

    @property
    def entries(self) -> list[tuple[str, np.ndarray]]:
        return list(zip(self.labels, self.positions))


# Global electrode list for patch-token models: every canonical 10-10 label
# (legacy aliases resolve to their modern names first).
GLOBAL_LABELS: tuple[str, ...] = tuple(
    sorted((k for k in STANDARD_POSITIONS if k not in _LEGACY and k not in ("T1", "T2")), key=str.upper)
)
GLOBAL_MONTAGE = Montage.from_labels(GLOBAL_LABELS)

# Fixed 22-channel input order for the conformer/GPT family (TUH-style 10-20 set).
NEUROGPT_CHANNELS: tuple[str, ...] = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T1", "T3", "C3", "Cz",
    "C4", "T4", "T2", "T5", "P3", "Pz", "P4", "T6", "O1", "Oz", "O2",
)
NEUROGPT_MONTAGE = Montage.from_labels(NEUROGPT_CHANNELS)


def global_index(label: str, montage: Montage = GLOBAL_MONTAGE) -> int | None:
    """Position of ``label`` in the global list, resolving legacy aliases."""
    try:
        label = canonical_label(label)
    except KeyError:
        return None
    label = _LEGACY.get(label, label)
    return montage.index(label)
