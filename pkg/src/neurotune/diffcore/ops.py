"""Differentiable ops on :class:`Tensor`.

Each op computes its forward value in float64, checks it is finite and, when
any input requires grad, records a closure returning one gradient per input.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

from .tensor import NonFiniteError, Tensor

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite value produced by '{op}'")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        out._op = op
    else:
        out._op = op
    return out


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data
    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)

    def backward(g):
        return (g * p * a.data ** (p - 1.0),)

    return _make(a.data**p, (a,), backward, "pow")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out_data = np.exp(a.data)
    return _make(out_data, (a,), lambda g: (g * out_data,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,), "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


# -- activations ---------------------------------------------------------------

def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    out_data = np.where(pos, a.data, alpha * np.expm1(np.minimum(a.data, 0.0)))

    def backward(g):
        return (g * np.where(pos, 1.0, out_data + alpha),)

    return _make(out_data, (a,), backward, "elu")


def gelu(a) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data / _SQRT2))

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _make(a.data * cdf, (a,), backward, "gelu")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _make(s, (a,), backward, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g):
        return (g - np.exp(out_data) * g.sum(axis=axis, keepdims=True),)

    return _make(out_data, (a,), backward, "log_softmax")


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``logits`` (B, C).

    A single logit column is read as a binary problem with an implicit zero
    logit for class 0.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"cross_entropy expects logits (B, C) matching {labels.shape[0]} labels, got {logits.shape}")
    z = logits.data
    if z.shape[1] == 1:
        z = np.concatenate([np.zeros_like(z), z], axis=1)
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        p *= g / n
        if logits.shape[1] == 1:
            p = p[:, 1:]
        return (p,)

    return _make(np.asarray(loss), (logits,), backward, "cross_entropy")


# -- reductions and shape ops --------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape),)

    return _make(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = 1
    for ax in axes:
        count *= a.shape[ax]

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape),)

    return _make(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), backward, "mean")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def flatten(a, start_dim: int = 1) -> Tensor:
    a = as_tensor(a)
    return reshape(a, a.shape[:start_dim] + (-1,))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def _has_advanced(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (np.ndarray, list)) for i in items)


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    advanced = _has_advanced(index)

    def backward(g):
        out = np.zeros_like(a.data)
        if advanced:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return _make(np.array(a.data[index]), (a,), backward, "getitem")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands need at least 2 dimensions")

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data @ b.data, (a, b), backward, "matmul")


# -- normalization -------------------------------------------------------------

def normalize(a, axes, eps: float = 1e-5) -> Tensor:
    """(x - mean) / sqrt(var + eps) over ``axes`` with biased variance."""
    a = as_tensor(a)
    axes = _norm_axes(axes, a.ndim)
    mu = a.data.mean(axis=axes, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward(g):
        gm = g.mean(axis=axes, keepdims=True)
        gxm = (g * xhat).mean(axis=axes, keepdims=True)
        return (inv_std * (g - gm - xhat * gxm),)

    return _make(xhat, (a,), backward, "normalize")


def layer_norm(a, weight, bias, eps: float = 1e-5) -> Tensor:
    return add(mul(normalize(a, (-1,), eps), weight), bias)


# -- stochastic ----------------------------------------------------------------

def dropout(a, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    a = as_tensor(a)
    if not training or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# -- convolution and pooling ---------------------------------------------------

def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def _padding4(padding):
    """Normalize to ((top, bottom), (left, right))."""
    if isinstance(padding, int):
        return ((padding, padding), (padding, padding))
    ph, pw = padding
    ph = (ph, ph) if isinstance(ph, int) else tuple(ph)
    pw = (pw, pw) if isinstance(pw, int) else tuple(pw)
    return (ph, pw)


def conv2d(x, weight, bias=None, stride=1, padding=0, groups: int = 1) -> Tensor:
    """Cross-correlation of x (B, Cin, H, W) with weight (Cout, Cin/groups, kh, kw)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    sh, sw = _pair(stride)
    (pt, pb), (pl, pr) = _padding4(padding)
    bsz, cin, _, _ = x.shape
    cout, cin_g, kh, kw = weight.shape
    if cin % groups or cout % groups or cin // groups != cin_g:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {weight.shape}, groups {groups}")
    cout_g = cout // groups
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    ho = (hp - kh) // sh + 1
    wo = (wp - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d kernel {(kh, kw)} larger than padded input {(hp, wp)}")
    xg = xp.reshape(bsz, groups, cin_g, hp, wp)
    wg = weight.data.reshape(groups, cout_g, cin_g, kh, kw)
    out = np.zeros((bsz, groups, cout_g, ho, wo))
    hs = sh * (ho - 1) + 1
    ws = sw * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            xs = xg[:, :, :, i:i + hs:sh, j:j + ws:sw]
            out += np.einsum("bgchw,goc->bgohw", xs, wg[:, :, :, i, j], optimize=True)
    out = out.reshape(bsz, cout, ho, wo)
    parents = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data.reshape(1, cout, 1, 1)
        parents = (x, weight, bias)

    def backward(g):
        gg = g.reshape(bsz, groups, cout_g, ho, wo)
        gx = gw = None
        if x.requires_grad:
            gxp = np.zeros_like(xg)
        if weight.requires_grad:
            gw = np.zeros_like(wg)
        for i in range(kh):
            for j in range(kw):
                if weight.requires_grad:
                    xs = xg[:, :, :, i:i + hs:sh, j:j + ws:sw]
                    gw[:, :, :, i, j] = np.einsum("bgohw,bgchw->goc", gg, xs, optimize=True)
                if x.requires_grad:
                    gxp[:, :, :, i:i + hs:sh, j:j + ws:sw] += np.einsum(
                        "bgohw,goc->bgchw", gg, wg[:, :, :, i, j], optimize=True
                    )
        if x.requires_grad:
            gx = gxp.reshape(bsz, cin, hp, wp)[:, :, pt:hp - pb, pl:wp - pr]
        if gw is not None:
            gw = gw.reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if bias.requires_grad else None)
        return tuple(grads)

    return _make(out, parents, backward, "conv2d")


def avg_pool_last(a, window: int, stride: int | None = None) -> Tensor:
    """Average pooling along the last axis (valid windows only)."""
    a = as_tensor(a)
    stride = window if stride is None else stride
    n = a.shape[-1]
    n_out = (n - window) // stride + 1
    if n_out < 1:
        raise ValueError(f"pool window {window} larger than axis length {n}")
    span = stride * (n_out - 1) + 1
    out = np.zeros(a.shape[:-1] + (n_out,))
    for j in range(window):
        out += a.data[..., j:j + span:stride]
    out /= window

    def backward(g):
        gx = np.zeros_like(a.data)
        gw = g / window
        for j in range(window):
            gx[..., j:j + span:stride] += gw
        return (gx,)

    return _make(out, (a,), backward, "avg_pool")
