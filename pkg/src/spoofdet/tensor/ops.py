"""Differentiable primitives used by the CCT, the CNN baseline and the linear models."""

from __future__ import annotations

import contextlib
import math
import threading
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (
    ConfigurationError,
    DimensionError,
    InputError,
    Tensor,
    UsageError,
    as_tensor,
    make_result,
    transpose,
    unbroadcast,
)


_kinks = threading.local()


@contextlib.contextmanager
def record_kinks():
    """Collect the discrete choices of piecewise ops (relu masks, pool winners).

    Two evaluations that record the same list lie on the same linear piece.
    """
    prev = getattr(_kinks, "log", None)
    _kinks.log = log = []
    try:
        yield log
    finally:
        _kinks.log = prev


def _note_kink(choice: np.ndarray) -> None:
    log = getattr(_kinks, "log", None)
    if log is not None:
        log.append(choice)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batching rules on the leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from e

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else unbroadcast(ga, a.shape),
            None if gb is None else unbroadcast(gb, b.shape),
        )

    return make_result("matmul", data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out).

    Leading axes of ``x`` are folded into one so the product is a single GEMM.
    """
    x = as_tensor(x)
    if x.ndim > 2:
        lead = x.shape[:-1]
        y = matmul(x.reshape(-1, x.shape[-1]), weight)
        if bias is not None:
            y = y + bias
        return y.reshape(*lead, weight.shape[-1])
    y = matmul(x, weight)
    return y if bias is None else y + bias


# -- convolution and pooling -------------------------------------------------

def _windows(x: np.ndarray) -> np.ndarray:
    """3x3 patches of a zero-padded (B, C, H, W) batch as a (B*H*W, C*9) matrix."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # B, C, H, W, 3, 3
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * 9)


def _correlate(x: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B, _, H, W = x.shape
    cols = _windows(x)
    out = cols @ k.reshape(k.shape[0], -1).T
    return out.reshape(B, H, W, k.shape[0]).transpose(0, 3, 1, 2), cols


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1, plus per-channel bias.

    ``x`` is (C_in, H, W) or a batch (B, C_in, H, W); the spatial extent
    is preserved.
    """
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise DimensionError(f"conv2d expects (C_out, C_in, 3, 3) kernels, got {kernels.shape}")
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d expects (C, H, W) or (B, C, H, W) input, got {x.shape}")
    unbatched = x.ndim == 3
    xd = x.data[None] if unbatched else x.data
    c_out, c_in = kernels.shape[:2]
    if xd.shape[1] != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs kernels {kernels.shape}")
    if bias.shape != (c_out,):
        raise DimensionError(f"conv2d bias shape {bias.shape} != ({c_out},)")

    out, cols = _correlate(xd, kernels.data)
    out = out + bias.data[None, :, None, None]
    if unbatched:
        out = out[0]

    def backward(g):
        gb = g[None] if unbatched else g
        B, _, H, W = gb.shape
        g2 = gb.transpose(0, 2, 3, 1).reshape(B * H * W, c_out)
        gk = (g2.T @ cols).reshape(kernels.shape) if kernels.requires_grad else None
        gbias = gb.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            flipped = kernels.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gx, _ = _correlate(gb, np.ascontiguousarray(flipped))
            if unbatched:
                gx = gx[0]
        return gx, gk, gbias

    return make_result("conv2d", out, (x, kernels, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 over the last two axes.

    The gradient goes to the first maximal element of each window in
    row-major scan order.
    """
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"maxpool2 needs at least 2 axes, got {x.shape}")
    *lead, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"maxpool2 needs even spatial extents, got {H}x{W}")
    blocks = x.data.reshape(*lead, H // 2, 2, W // 2, 2)
    n = len(lead)
    order = tuple(range(n)) + (n, n + 2, n + 1, n + 3)
    win = blocks.transpose(order).reshape(*lead, H // 2, W // 2, 4)
    idx = win.argmax(axis=-1)
    _note_kink(idx)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        mask = np.zeros(win.shape)
        np.put_along_axis(mask, idx[..., None], g[..., None], axis=-1)
        inv = tuple(range(n)) + (n, n + 2, n + 1, n + 3)
        mask = mask.reshape(*lead, H // 2, W // 2, 2, 2).transpose(inv)
        return (mask.reshape(x.shape),)

    return make_result("maxpool2", out, (x,), backward)


# -- activations and normalisation -------------------------------------------

def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    _note_kink(mask)
    return make_result("relu", x.data * mask, (x,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * (v * v * v))
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * (v * v))
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return make_result("gelu", out, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis")
    if gain.shape != (d,) or shift.shape != (d,):
        raise DimensionError(f"layer_norm affine shapes {gain.shape}/{shift.shape} != ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv_std = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv_std
    out = xhat * gain.data + shift.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gain.data
        gx = inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result("layer_norm", out, (x, gain, shift), backward)


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    x = as_tensor(x)
    y = _softmax(x.data)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_result("softmax", y, (x,), backward)


def cross_entropy(logits: Tensor, labels: Sequence[int], class_weights: Optional[Sequence[float]] = None) -> Tensor:
    """Mean negative log-softmax of the true class.

    With ``class_weights`` each example counts with the weight of its class
    and the sum is divided by the total weight.
    """
    logits = as_tensor(logits)
    y = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects (B, K) logits, got {logits.shape}")
    if y.shape != (logits.shape[0],):
        raise DimensionError(f"{y.shape[0] if y.ndim else 0} labels for {logits.shape[0]} logit rows")
    if not np.isin(y, (0, 1)).all():
        raise InputError(f"labels must be 0 or 1, got {sorted(set(y.tolist()) - {0, 1})}")
    y = y.astype(np.intp)
    v = logits.data
    m = v.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(v - m).sum(axis=-1))
    nll = lse - v[np.arange(len(y)), y]
    w = np.ones(len(y)) if class_weights is None else np.asarray(class_weights, dtype=np.float64)[y]
    total = w.sum()
    loss = np.array((w * nll).sum() / total)

    def backward(g):
        p = _softmax(v)
        p[np.arange(len(y)), y] -= 1.0
        return (p * (w / total)[:, None] * g,)

    return make_result("cross_entropy", loss, (logits,), backward)


# -- attention ---------------------------------------------------------------

class AttentionParams(NamedTuple):
    """Q/K/V/output projections, each (d, d), stored input-major.

    There is no key bias: it shifts every score in a query row by the same
    amount, so softmax cancels it and its gradient is identically zero.
    """

    wq: Tensor
    bq: Tensor
    wk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def multi_head_attention(x: Tensor, params: AttentionParams, heads: int) -> tuple[Tensor, Tensor]:
    """Scaled dot-product self-attention split across ``heads`` subspaces.

    Args:
        x: tokens, (T, d) or (B, T, d).
        params: projection weights, see :class:`AttentionParams`.
        heads: number of heads; must divide d.

    Returns:
        The (…, T, d) output and the (…, heads, T, T) attention weights.
    """
    x = as_tensor(x)
    d = x.shape[-1]
    if heads < 1 or d % heads:
        raise ConfigurationError(f"token dim {d} is not divisible by {heads} heads")
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape(1, *x.shape)
    B, T, _ = x.shape
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return transpose(t.reshape(B, T, heads, dh), (0, 2, 1, 3))

    q = split(linear(x, params.wq, params.bq))
    k = split(linear(x, params.wk))
    v = split(linear(x, params.wv, params.bv))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    weights = softmax(scores)
    ctx = transpose(matmul(weights, v), (0, 2, 1, 3)).reshape(B, T, d)
    out = linear(ctx, params.wo, params.bo)
    if unbatched:
        return out.reshape(T, d), weights.reshape(heads, T, T)
    return out, weights


def check_scalar(t: Tensor) -> None:
    if t.size != 1:
        raise UsageError(f"expected a scalar output, got shape {t.shape}")
