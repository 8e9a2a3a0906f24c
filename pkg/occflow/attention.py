"""
occflow/attention.py
Multi-head attention with additive relative-position bias, window
partitioning and the shifted-window mask.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple, Union

import numpy as np

from occflow.errors import ConfigError
from occflow.nn import Linear, Module, Parameter
from occflow.tensor import ArrayLike, Tensor, as_tensor, roll, softmax

MASK_VALUE = -1e9


# ═══════════════════════════════════════════════════════════════
# CORE ATTENTION
# ═══════════════════════════════════════════════════════════════

def _split_heads(x: Tensor, heads: int) -> Tensor:
    *batch, n, d = x.shape
    nb = len(batch)
    x  = x.reshape(tuple(batch) + (n, heads, d // heads))
    return x.transpose(tuple(range(nb)) + (nb + 1, nb, nb + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *batch, h, n, d = x.shape
    nb = len(batch)
    x  = x.transpose(tuple(range(nb)) + (nb + 1, nb, nb + 2))
    return x.reshape(tuple(batch) + (n, h * d))


def msa(
    q: ArrayLike,
    k: ArrayLike,
    v: ArrayLike,
    heads: int,
    bias: Optional[ArrayLike] = None,
    mask: Optional[ArrayLike] = None,
    w_o: Optional[Union[Linear, ArrayLike]] = None,
    return_weights: bool = False,
):
    """
    head_i = softmax(Q_i K_i^T / √d + B_i + mask) V_i, heads concatenated,
    then multiplied by W^O when given. q (..., Nq, D), k/v (..., Nk, D);
    bias broadcasts to (heads, Nq, Nk), mask to (..., heads, Nq, Nk).
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    for name, t in (("query", q), ("key", k), ("value", v)):
        if t.shape[-1] % heads:
            raise ConfigError(f"{name} dim {t.shape[-1]} is not divisible by {heads} heads")
    d = q.shape[-1] // heads

    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    nb = kh.ndim - 2
    scores = (qh @ kh.transpose(tuple(range(nb)) + (nb + 1, nb))) * (1.0 / math.sqrt(d))
    if bias is not None:
        scores = scores + bias
    if mask is not None:
        scores = scores + mask
    weights = softmax(scores, axis=-1)
    out     = _merge_heads(weights @ vh)

    if isinstance(w_o, Module):
        out = w_o(out)
    elif w_o is not None:
        out = out @ w_o
    return (out, weights) if return_weights else out


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """(..., Nk) bool → additive (..., 1, 1, Nk) mask for msa."""
    valid = np.asarray(valid, dtype=bool)
    return np.where(valid, 0.0, MASK_VALUE)[..., None, None, :]


def inner_dim(dim: int, heads: int) -> int:
    """Smallest multiple of `heads` that is ≥ dim."""
    return heads * -(-dim // heads)


# ═══════════════════════════════════════════════════════════════
# RELATIVE POSITION BIAS
# ═══════════════════════════════════════════════════════════════

def relative_position_index(wh: int, ww: int) -> np.ndarray:
    """(N, N) table row per query/key pair, N = wh·ww; equal offsets share a row."""
    coords = np.stack(np.meshgrid(np.arange(wh), np.arange(ww), indexing="ij")).reshape(2, -1)
    rel    = coords[:, :, None] - coords[:, None, :]
    rel[0] += wh - 1
    rel[1] += ww - 1
    rel[0] *= 2 * ww - 1
    return rel.sum(axis=0)


class RelPosBias(Module):
    def __init__(self, window: Union[int, Tuple[int, int]], heads: int, rng: np.random.Generator):
        wh, ww = (window, window) if isinstance(window, int) else window
        self.window = (wh, ww)
        self.heads  = heads
        self.index  = relative_position_index(wh, ww)
        self.table  = Parameter(rng.normal(0.0, 0.02, size=((2 * wh - 1) * (2 * ww - 1), heads)))

    def forward(self) -> Tensor:
        n = self.index.shape[0]
        return self.table[self.index.reshape(-1)].reshape(n, n, self.heads).transpose(2, 0, 1)


# ═══════════════════════════════════════════════════════════════
# WINDOWS
# ═══════════════════════════════════════════════════════════════

def window_partition(x, w: int):
    """(B, H, W, C) or (H, W, C) → (B·nW, w², C), windows and cells row-major."""
    squeeze = x.ndim == 3
    if squeeze:
        x = x.reshape((1,) + tuple(x.shape))
    B, H, W, C = x.shape
    if H % w or W % w:
        raise ConfigError(f"feature map {H}×{W} is not divisible by window {w}")
    x = x.reshape((B, H // w, w, W // w, w, C)).transpose((0, 1, 3, 2, 4, 5))
    return x.reshape((B * (H // w) * (W // w), w * w, C))


def window_reverse(windows, w: int, H: int, W: int, batched: bool = False):
    """Inverse of window_partition."""
    C = windows.shape[-1]
    B = windows.shape[0] // ((H // w) * (W // w))
    x = windows.reshape((B, H // w, W // w, w, w, C)).transpose((0, 1, 3, 2, 4, 5))
    x = x.reshape((B, H, W, C))
    return x if batched else x.reshape((H, W, C)) if B == 1 else x


def shift_regions(H: int, W: int, w: int, shift: int) -> np.ndarray:
    """Label each cell with its pre-shift region id (Swin's nine-region split)."""
    labels = np.zeros((H, W), dtype=np.int64)
    spans  = (slice(0, -w), slice(-w, -shift), slice(-shift, None))
    cnt = 0
    for hs in spans:
        for ws in spans:
            labels[hs, ws] = cnt
            cnt += 1
    return labels


def shift_mask(H: int, W: int, w: int, shift: int) -> Optional[np.ndarray]:
    """(nW, w², w²) additive mask, −1e9 between cells of different regions."""
    if shift == 0:
        return None
    labels = shift_regions(H, W, w, shift)[..., None]
    win    = window_partition(labels, w)[..., 0]
    return np.where(win[:, None, :] != win[:, :, None], MASK_VALUE, 0.0)


def shifted_window_attention(
    x: Tensor,
    w: int,
    shift: int,
    rel_bias: Optional[Union[RelPosBias, ArrayLike]],
    heads: int,
    qkv: Optional[Linear] = None,
    proj: Optional[Linear] = None,
) -> Tensor:
    """
    Cyclic shift by (−shift, −shift), window attention with the region mask,
    inverse shift. Without `qkv`, queries, keys and values are the input itself.
    """
    x = as_tensor(x)
    batched = x.ndim == 4
    if not batched:
        x = x.reshape((1,) + x.shape)
    B, H, W, C = x.shape

    shifted = roll(x, (-shift, -shift), (1, 2)) if shift else x
    windows = window_partition(shifted, w)

    if qkv is not None:
        t = qkv(windows)
        d = t.shape[-1] // 3
        q, k, v = t[..., :d], t[..., d:2 * d], t[..., 2 * d:]
    else:
        q = k = v = windows

    bias = rel_bias() if isinstance(rel_bias, RelPosBias) else rel_bias
    mask = shift_mask(H, W, w, shift)
    if mask is not None:
        mask = np.tile(mask, (B, 1, 1))[:, None]

    out = msa(q, k, v, heads, bias=bias, mask=mask, w_o=proj)
    out = window_reverse(out, w, H, W, batched=True)
    if shift:
        out = roll(out, (shift, shift), (1, 2))
    return out if batched else out.reshape(out.shape[1:])


# ═══════════════════════════════════════════════════════════════
# MODULES
# ═══════════════════════════════════════════════════════════════

class WindowAttention(Module):
    """W-SA / SW-SA layer core: fused qkv projection, relative bias, output projection."""

    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        inner       = inner_dim(dim, heads)
        self.heads  = heads
        self.window = window
        self.qkv    = Linear(dim, 3 * inner, rng)
        self.proj   = Linear(inner, dim, rng)
        self.bias   = RelPosBias(window, heads, rng)

    def forward(self, x: Tensor, shift: int = 0) -> Tensor:
        return shifted_window_attention(x, self.window, shift, self.bias, self.heads, qkv=self.qkv, proj=self.proj)


class MultiHeadAttention(Module):
    """Separate q/k/v projections so queries and keys may come from different sources."""

    def __init__(
        self,
        dim_q: int,
        heads: int,
        rng: np.random.Generator,
        dim_kv: Optional[int] = None,
        dim_out: Optional[int] = None,
    ):
        inner       = inner_dim(dim_q, heads)
        dim_kv      = dim_kv or dim_q
        self.heads  = heads
        self.q_proj = Linear(dim_q, inner, rng)
        self.k_proj = Linear(dim_kv, inner, rng)
        self.v_proj = Linear(dim_kv, inner, rng)
        self.o_proj = Linear(inner, dim_out or dim_q, rng)

    def forward(self, query: Tensor, context: Optional[Tensor] = None, mask: Optional[np.ndarray] = None, bias=None) -> Tensor:
        context = query if context is None else context
        return msa(
            self.q_proj(query), self.k_proj(context), self.v_proj(context),
            self.heads, bias=bias, mask=mask, w_o=self.o_proj,
        )
