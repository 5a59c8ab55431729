from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffcore import Module


@dataclass(frozen=True)
class LayerCount:
    name: str
    kind: str
    total: int
    trainable: int


@dataclass(frozen=True)
class ParamReport:
    layers: tuple[LayerCount, ...]

    @property
    def total(self) -> int:
        return sum(row.total for row in self.layers)

    @property
    def trainable(self) -> int:
        return sum(row.trainable for row in self.layers)

    @property
    def frozen(self) -> int:
        return self.total - self.trainable

    def by_kind(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for row in self.layers:
            slot = out.setdefault(row.kind, {"total": 0, "trainable": 0})
            slot["total"] += row.total
            slot["trainable"] += row.trainable
        return out

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "trainable": self.trainable,
            "frozen": self.frozen,
            "by_kind": self.by_kind(),
            "layers": [row.__dict__ for row in self.layers],
        }

    def format_table(self, only_nonzero: bool = False) -> str:
        lines = [f"{'layer':<48} {'kind':<16} {'total':>12} {'trainable':>12}"]
        for row in self.layers:
            if only_nonzero and row.trainable == 0:
                continue
            lines.append(f"{row.name:<48} {row.kind:<16} {row.total:>12,} {row.trainable:>12,}")
        lines.append(f"{'TOTAL':<48} {'':<16} {self.total:>12,} {self.trainable:>12,}")
        return "\n".join(lines)


def layer_kind(module: Module) -> str:
    return module.kind or "other"


def count_params(model: Module) -> ParamReport:
    """Per-layer total and trainable counts for every module owning parameters."""
    rows = []
    for name, mod in model.named_modules():
        params = list(mod.direct_parameters())
        if not params:
            continue
        total = sum(int(np.prod(p.shape, dtype=np.int64)) for _, p in params)
        trainable = sum(int(np.prod(p.shape, dtype=np.int64)) for _, p in params if p.requires_grad)
        rows.append(LayerCount(name or "<root>", layer_kind(mod), total, trainable))
    return ParamReport(tuple(rows))


def count(model: Module, which: str = "all") -> int:
    report = count_params(model)
    if which == "all":
        return report.total
    if which == "trainable":
        return report.trainable
    raise ValueError(f"unknown count filter '{which}'")


def _selected(model: Module, selector) -> list[Module]:
    mods = [m for _, m in model.named_modules() if any(True for _ in m.direct_parameters())]
    if selector == "all":
        return mods
    if selector == "backbone":
        return [m for m in mods if m.kind != "head"]
    if selector == "head":
        return [m for m in mods if m.kind == "head"]
    kinds = {selector} if isinstance(selector, str) else set(selector)
    return [m for m in mods if m.kind in kinds]


def freeze(model: Module, selector="backbone", require_match: bool = False) -> Module:
    """Set ``requires_grad=False`` on every tensor of the selected layers.

    ``selector`` is ``"all"``, ``"backbone"`` (everything but the head) or a
    set of layer kinds.
    """
    mods = _selected(model, selector)
    if require_match and not mods:
        raise ValueError(f"freeze selector {selector!r} matched no layers")
    for mod in mods:
        for _, p in mod.direct_parameters():
            p.requires_grad = False
            p.grad = None
    return model


def unfreeze(model: Module, selector="all") -> Module:
    for mod in _selected(model, selector):
        for _, p in mod.direct_parameters():
            p.requires_grad = True
    return model
