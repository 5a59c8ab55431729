from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class MissingGradientError(ValueError):
    pass


@dataclass
class OptimizerState:
    kind: str
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


class Optimizer:
    def __init__(self, params, state: OptimizerState):
        self.params: list[Tensor] = list(params)
        self.state = state

    def _trainable(self):
        for i, p in enumerate(self.params):
            if not p.requires_grad:
                continue
            if p.grad is None:
                raise MissingGradientError(f"no gradient for trainable parameter #{i} {p.name or ''}".strip())
            yield i, p

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr: float = 0.01):
        super().__init__(params, OptimizerState("sgd", lr))

    def step(self) -> None:
        updates = list(self._trainable())
        self.state.step += 1
        for _, p in updates:
            p.data = p.data - self.state.lr * p.grad


class Adam(Optimizer):
    """Bias-corrected Adam without weight decay."""

    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, OptimizerState("adam", lr, tuple(betas), eps))

    def step(self) -> None:
        updates = list(self._trainable())
        st = self.state
        st.step += 1
        b1, b2 = st.betas
        c1 = 1.0 - b1**st.step
        c2 = 1.0 - b2**st.step
        for i, p in updates:
            m = st.m.get(i)
            if m is None:
                m = np.zeros_like(p.data)
                st.v[i] = np.zeros_like(p.data)
            v = st.v[i]
            m = b1 * m + (1.0 - b1) * p.grad
            v = b2 * v + (1.0 - b2) * p.grad * p.grad
            st.m[i], st.v[i] = m, v
            p.data = p.data - st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def make_optimizer(kind: str, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> Optimizer:
    if kind == "adam":
        return Adam(params, lr=lr, betas=betas, eps=eps)
    if kind == "sgd":
        return SGD(params, lr=lr)
    raise ValueError(f"unknown optimizer '{kind}'")
