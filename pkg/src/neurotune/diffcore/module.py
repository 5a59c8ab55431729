"""Minimal module container: named parameters, children, train/eval mode."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from .tensor import Tensor


def Parameter(data, requires_grad: bool = True) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad)


class Module:
    """Base class.  Tensors that require grad or were registered with
    :meth:`register_parameter` are parameters; Module attributes are children.
    """

    kind: str | None = None

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)
        object.__setattr__(self, "_rng", None)

    def __setattr__(self, name, value):
        params = self.__dict__.get("_params")
        if params is None:
            raise AttributeError("Module.__init__ was not called")
        if isinstance(value, Module):
            self._children[name] = value
            params.pop(name, None)
        elif isinstance(value, Tensor):
            params[name] = value
            self._children.pop(name, None)
        object.__setattr__(self, name, value)

    def __delattr__(self, name):
        self._params.pop(name, None)
        self._children.pop(name, None)
        self._buffers.pop(name, None)
        object.__delattr__(self, name)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = name
        object.__setattr__(self, name, value)

    # -- traversal ---------------------------------------------------------
    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        yield from self._children.items()

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def direct_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self._params.items()

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for mod_name, mod in self.named_modules(prefix):
            for pname, p in mod._params.items():
                yield (f"{mod_name}.{pname}" if mod_name else pname), p

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for mod_name, mod in self.named_modules(prefix):
            for bname in mod._buffers:
                yield (f"{mod_name}.{bname}" if mod_name else bname), getattr(mod, bname)

    def get_submodule(self, path: str) -> "Module":
        mod = self
        if path:
            for part in path.split("."):
                mod = mod._children[part]
        return mod

    # -- state -------------------------------------------------------------
    def train(self, mode: bool = True) -> "Module":
        for _, mod in self.named_modules():
            object.__setattr__(mod, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def set_rng(self, rng: np.random.Generator | None) -> "Module":
        for _, mod in self.named_modules():
            object.__setattr__(mod, "_rng", rng)
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(b, copy=True) for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = dict(self.named_parameters())
        buffers = {name for name, _ in self.named_buffers()}
        missing = (set(params) | buffers) - set(state)
        unexpected = set(state) - set(params) - buffers
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, value in state.items():
            if name in params:
                p = params[name]
                value = np.asarray(value, dtype=np.float64)
                if value.shape != p.shape:
                    raise ValueError(f"shape mismatch for {name}: {value.shape} vs {p.shape}")
                p.data = value.copy()
            elif name in buffers:
                mod_path, _, bname = name.rpartition(".")
                object.__setattr__(self.get_submodule(mod_path), bname, np.array(value, dtype=np.float64))

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)
