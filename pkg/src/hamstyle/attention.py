"""Scaled dot-product attention with addressable, hookable self/cross sites."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import layers
from .errors import ContractError, ShapeError


class SiteKind(str, enum.Enum):
    SELF = "self"
    CROSS = "cross"


@dataclass(frozen=True, order=True)
class AttentionSiteId:
    layer_index: int
    kind: SiteKind

    def __post_init__(self):
        if self.layer_index < 0:
            raise ValueError("layer_index must be non-negative")
        object.__setattr__(self, "kind", SiteKind(self.kind))

    def __str__(self):
        return f"layer {self.layer_index}/{self.kind.value}"


@dataclass(frozen=True)
class AttentionProjections:
    """Query, key and value matrices captured at one attention site.

    Arrays are ``(tokens, features)``; a leading batch axis is allowed.
    """

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q, k, v = self.q, self.k, self.v
        if min(q.ndim, k.ndim, v.ndim) < 2:
            raise ShapeError("projections must have rank >= 2")
        if q.shape[-1] != k.shape[-1]:
            raise ShapeError(f"q and k feature sizes differ: {q.shape[-1]} vs {k.shape[-1]}")
        if k.shape[-2] != v.shape[-2]:
            raise ShapeError(f"k and v token counts differ: {k.shape[-2]} vs {v.shape[-2]}")
        if q.shape[:-2] != k.shape[:-2] or k.shape[:-2] != v.shape[:-2]:
            raise ShapeError("q, k, v batch shapes differ")

    @property
    def shapes(self):
        return self.q.shape, self.k.shape, self.v.shape

    def astuple(self):
        return self.q, self.k, self.v


# A hook receives the site and its projections and returns replacement projections.
Hook = Callable[[AttentionSiteId, AttentionProjections], AttentionProjections]


@dataclass(frozen=True)
class AttentionWeights:
    """Per-site parameters: pre-norm, bias-free q/k/v projections and output projection."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    norm_gain: Optional[np.ndarray] = None
    norm_bias: Optional[np.ndarray] = None
    groups: int = 1
    heads: int = 1


def scaled_dot_product_attention(p: AttentionProjections, heads: int = 1) -> np.ndarray:
    """``softmax(Q K^T / sqrt(d_k)) V`` with ``d_k`` the per-head key width."""
    if p.q.shape[-1] % heads:
        raise ShapeError(f"feature size {p.q.shape[-1]} not divisible by {heads} heads")
    if p.v.shape[-1] % heads:
        raise ShapeError(f"value size {p.v.shape[-1]} not divisible by {heads} heads")
    out, _ = layers.attention(p.q, p.k, p.v, heads)
    return out


def project(x, context, weights: AttentionWeights, kind=SiteKind.SELF) -> AttentionProjections:
    """Linear projections: queries from ``x``, keys and values from ``context``.

    For self-attention ``context`` must be ``x`` (``None`` is accepted as shorthand).
    """
    kind = SiteKind(kind)
    if context is None:
        if kind is SiteKind.CROSS:
            raise ShapeError("cross-attention needs a context sequence")
        context = x
    if x.shape[-1] != weights.wq.shape[0]:
        raise ShapeError(f"x has {x.shape[-1]} features, wq expects {weights.wq.shape[0]}")
    if context.shape[-1] != weights.wk.shape[0] or context.shape[-1] != weights.wv.shape[0]:
        raise ShapeError(f"context has {context.shape[-1]} features, wk/wv expect {weights.wk.shape[0]}")
    return AttentionProjections(x @ weights.wq, context @ weights.wk, context @ weights.wv)


def _apply_hook(hook, site, p: AttentionProjections) -> AttentionProjections:
    if p.q.ndim == 2:
        out = hook(site, p)
        if out.shapes != p.shapes:
            raise ContractError(f"hook at {site} changed shapes {p.shapes} -> {out.shapes}")
        return out
    # batched: hooks see one sample at a time
    parts = [_apply_hook(hook, site, AttentionProjections(q, k, v)) for q, k, v in zip(*p.astuple())]
    return AttentionProjections(*(np.stack(t) for t in zip(*(r.astuple() for r in parts))))


def run_attention_block(x, context, weights: AttentionWeights, site: AttentionSiteId, hook: Optional[Hook] = None):
    """Pre-norm attention block with residual: ``x + Attention(hook(project(norm(x), ctx))) W_o``.

    ``context`` is ignored for self sites (the normalized ``x`` is used).
    """
    return block_forward(x, context, weights, site, hook)


def block_forward(x, context, weights: AttentionWeights, site: AttentionSiteId, hook=None, saved=None):
    """:func:`run_attention_block` that optionally stores activations for :func:`block_backward`."""
    h, gn = x, None
    if weights.norm_gain is not None:
        h, gn = layers.group_norm(x, weights.norm_gain, weights.norm_bias, weights.groups)
    ctx = h if site.kind is SiteKind.SELF else context
    p = project(h, ctx, weights, site.kind)
    if hook is not None:
        p = _apply_hook(hook, site, p)
    if p.q.shape[-1] % weights.heads or p.v.shape[-1] % weights.heads:
        raise ShapeError(f"projection widths not divisible by {weights.heads} heads")
    o, attn = layers.attention(p.q, p.k, p.v, weights.heads)
    if saved is not None:
        if hook is not None:
            raise ContractError("backward through a hooked block is not supported")
        saved.update(h=h, gn=gn, ctx=ctx, q=p.q, k=p.k, v=p.v, attn=attn, o=o)
    return x + o @ weights.wo


def block_backward(dy, saved, weights: AttentionWeights, site: AttentionSiteId):
    """Gradients of :func:`block_forward`: ``(dx, dcontext, grads)``.

    ``grads`` maps ``wq, wk, wv, wo, norm_gain, norm_bias`` to arrays; ``dcontext``
    is ``None`` for self sites.
    """
    s = saved
    _, dwo, _ = layers.linear_backward(dy, s["o"], weights.wo)
    do = dy @ weights.wo.T
    dq, dk, dv = layers.attention_backward(do, s["q"], s["k"], s["v"], s["attn"], weights.heads)
    dh, dwq, _ = layers.linear_backward(dq, s["h"], weights.wq)
    dctx_k, dwk, _ = layers.linear_backward(dk, s["ctx"], weights.wk)
    dctx_v, dwv, _ = layers.linear_backward(dv, s["ctx"], weights.wv)
    dctx = dctx_k + dctx_v
    if site.kind is SiteKind.SELF:
        dh = dh + dctx
        dctx = None
    grads = {"wq": dwq, "wk": dwk, "wv": dwv, "wo": dwo}
    if s["gn"] is not None:
        dn, grads["norm_gain"], grads["norm_bias"] = layers.group_norm_backward(
            dh, s["gn"], weights.norm_gain, weights.groups
        )
    else:
        dn = dh
    return dy + dn, dctx, grads
