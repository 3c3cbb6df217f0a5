"""Forward/backward pairs for the few layers the denoiser is built from.

Arrays carry a leading batch axis where it matters; token tensors are
``(..., tokens, features)``.  Backward functions return gradients in the
order of the forward arguments.
"""

from __future__ import annotations

import math

import numpy as np

NORM_EPS = 1e-5


def linear(x, w, b=None):
    y = x @ w
    if b is not None:
        y = y + b
    return y


def linear_backward(dy, x, w, has_bias=False):
    dx = dy @ w.T
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = x2.T @ dy2
    db = dy2.sum(axis=0) if has_bias else None
    return dx, dw, db


def silu(x):
    return x / (1.0 + np.exp(-x))


def silu_backward(dy, x):
    s = 1.0 / (1.0 + np.exp(-x))
    return dy * (s * (1.0 + x * (1.0 - s)))


def group_norm(x, gain, bias, groups, eps=NORM_EPS):
    """Group norm over ``(tokens, features // groups)`` blocks of each sample.

    Returns the output and the ``(xhat, inv_std)`` pair needed by the backward.
    """
    *lead, n, c = x.shape
    xg = x.reshape(*lead, n, groups, c // groups)
    axes = (-3, -1)
    mean = xg.mean(axis=axes, keepdims=True)
    var = ((xg - mean) ** 2).mean(axis=axes, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mean) * inv_std).reshape(x.shape)
    return xhat * gain + bias, (xhat, inv_std)


def group_norm_backward(dy, saved, gain, groups):
    xhat, inv_std = saved
    *lead, n, c = dy.shape
    red = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=red)
    dbias = dy.sum(axis=red)
    dxhat = (dy * gain).reshape(*lead, n, groups, c // groups)
    xh = xhat.reshape(dxhat.shape)
    axes = (-3, -1)
    m = n * (c // groups)
    dx = inv_std / m * (
        m * dxhat - dxhat.sum(axis=axes, keepdims=True) - xh * (dxhat * xh).sum(axis=axes, keepdims=True)
    )
    return dx.reshape(dy.shape), dgain, dbias


def _split_heads(x, heads):
    *lead, n, d = x.shape
    return np.swapaxes(x.reshape(*lead, n, heads, d // heads), -2, -3)


def _merge_heads(x):
    x = np.swapaxes(x, -2, -3)
    *lead, n, h, dh = x.shape
    return x.reshape(*lead, n, h * dh)


def softmax(s, axis=-1):
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def attention(q, k, v, heads=1):
    """Multi-head ``softmax(q k^T / sqrt(d_head)) v``; returns output and weights."""
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    weights = softmax((qh @ np.swapaxes(kh, -1, -2)) * scale)
    return _merge_heads(weights @ vh), weights


def attention_backward(dout, q, k, v, weights, heads=1):
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / math.sqrt(qh.shape[-1])
    do = _split_heads(dout, heads)
    dv = np.swapaxes(weights, -1, -2) @ do
    dw = do @ np.swapaxes(vh, -1, -2)
    ds = weights * (dw - (dw * weights).sum(axis=-1, keepdims=True)) * scale
    dq = ds @ kh
    dk = np.swapaxes(ds, -1, -2) @ qh
    return _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)


def timestep_embedding(t, dim, max_period=10000.0):
    """Sinusoidal encoding of integer timesteps, shape ``(len(t), dim)``."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / max(half, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb


def patchify(z, patch):
    """``(B, C, H, W)`` -> ``(B, (H/p)(W/p), C p p)`` row-major over patches."""
    b, c, h, w = z.shape
    x = z.reshape(b, c, h // patch, patch, w // patch, patch)
    x = x.transpose(0, 2, 4, 1, 3, 5)
    return x.reshape(b, (h // patch) * (w // patch), c * patch * patch)


def unpatchify(x, channels, size, patch):
    b = x.shape[0]
    g = size // patch
    x = x.reshape(b, g, g, channels, patch, patch).transpose(0, 3, 1, 4, 2, 5)
    return x.reshape(b, channels, size, size)
