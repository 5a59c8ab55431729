"""Minibatch training and evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..diffcore import Module, NonFiniteError, make_optimizer, ops
from ..modelzoo.accounting import count
from .inputs import n_items, take

log = logging.getLogger(__name__)

TRANSFORMER_FAMILIES = {"labram_like", "neurogpt_encoder_like", "neurogpt_full_like"}


def default_lr(family: str) -> float:
    return 5e-4 if family in TRANSFORMER_FAMILIES else 1e-3


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    optimizer: str = "adam"
    eval_batch_size: int = 128

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class RunResult:
    train_loss: list[float]
    accuracy: float | None
    n_correct: int
    n_val: int
    trainable_params: int
    total_params: int
    seed: int
    fingerprint: str = ""
    status: str = "ok"
    error: str = ""
    info: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(**d)


def _module(model) -> Module:
    return getattr(model, "model", model)


def fit(model, inputs: dict, y: np.ndarray, settings: TrainSettings, seed: int) -> list[float]:
    """Train in place; returns the mean loss of every epoch."""
    net = _module(model)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("empty training set")
    if n_items(inputs) != n:
        raise ValueError("inputs and labels disagree on trial count")
    shuffle_seq, dropout_seq = np.random.SeedSequence(seed).spawn(2)
    order_rng = np.random.default_rng(shuffle_seq)
    net.set_rng(np.random.default_rng(dropout_seq))
    params = net.trainable_parameters()
    if not params:
        raise ValueError("model has no trainable parameters")
    opt = make_optimizer(settings.optimizer, params, settings.lr)
    losses = []
    net.train()
    for _ in range(settings.epochs):
        order = order_rng.permutation(n)
        total = 0.0
        for start in range(0, n, settings.batch_size):
            idx = order[start : start + settings.batch_size]
            opt.zero_grad()
            loss = ops.cross_entropy(net(take(inputs, idx)), y[idx])
            loss.backward()
            opt.step()
            total += float(loss.data) * len(idx)
        losses.append(total / n)
    return losses


def predict(model, inputs: dict, batch_size: int = 128) -> np.ndarray:
    net = _module(model)
    was_training = net.training
    net.eval()
    out = []
    n = n_items(inputs)
    for start in range(0, n, batch_size):
        logits = net(take(inputs, np.arange(start, min(n, start + batch_size)))).data
        if logits.shape[1] == 1:
            out.append((logits[:, 0] > 0).astype(np.int64))
        else:
            out.append(np.argmax(logits, axis=1))
    net.train(was_training)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def accuracy(model, inputs: dict, y, batch_size: int = 128) -> tuple[float, int]:
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty validation set")
    correct = int((predict(model, inputs, batch_size) == y).sum())
    return correct / len(y), correct


def train_run(model, train: tuple[dict, np.ndarray], val: tuple[dict, np.ndarray], settings: TrainSettings,
              seed: int, fingerprint: str = "", info: dict | None = None) -> RunResult:
    """Train then evaluate in eval mode.  A non-finite loss marks the run failed."""
    net = _module(model)
    t0 = time.perf_counter()
    trainable, total = count(net, "trainable"), count(net, "all")
    losses: list[float] = []
    try:
        losses = fit(model, train[0], train[1], settings, seed)
        acc, correct = accuracy(model, val[0], val[1], settings.eval_batch_size)
    except NonFiniteError as exc:
        log.warning("run %s failed: %s", fingerprint or "<anon>", exc)
        return RunResult(losses, None, 0, len(val[1]), trainable, total, seed, fingerprint, "failed", str(exc),
                         dict(info or {}), time.perf_counter() - t0)
    return RunResult(losses, acc, correct, len(val[1]), trainable, total, seed, fingerprint, "ok", "",
                     dict(info or {}), time.perf_counter() - t0)


def perturb_backbone(model, scale: float, rng: np.random.Generator) -> None:
    """Add Gaussian noise of ``scale`` times each backbone tensor's std."""
    net = _module(model)
    for name, p in net.named_parameters():
        if name.startswith("head.") or ".lora." in name:
            continue
        sd = float(p.data.std()) or 1.0
        p.data = p.data + scale * sd * rng.standard_normal(p.shape)
