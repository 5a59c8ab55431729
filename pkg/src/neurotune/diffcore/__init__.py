"""Reverse-mode autodiff on numpy arrays, plus optimizers and gradient checking."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, finite_diff_check, relative_error
from .module import Module, Parameter
from .optim import SGD, Adam, MissingGradientError, OptimizerState, make_optimizer
from .tensor import Graph, GraphReleasedError, NonFiniteError, Tensor


def forward(model: Module, inputs, rng=None):
    """Run ``model`` on ``inputs`` and return (output, graph snapshot)."""
    if rng is not None:
        model.set_rng(rng)
    out = model(inputs)
    return out, Graph.trace(out)


__all__ = [
    "Adam",
    "Graph",
    "GraphReleasedError",
    "GradCheckReport",
    "MissingGradientError",
    "Module",
    "NonFiniteError",
    "OptimizerState",
    "Parameter",
    "SGD",
    "Tensor",
    "finite_diff_check",
    "forward",
    "load_checkpoint",
    "make_optimizer",
    "ops",
    "relative_error",
    "save_checkpoint",
]
