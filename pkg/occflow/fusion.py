"""
occflow/fusion.py
Flow-guided multi-head self-attention and the per-step trajectory
cross-attention.
"""

from __future__ import annotations

from typing import List, Optional

import numpy as np

from occflow.attention import MultiHeadAttention, RelPosBias, key_padding_mask, msa
from occflow.nn import LayerNorm, Linear, Mlp, Module, ModuleList
from occflow.scene import ModelConfig
from occflow.tensor import Tensor
from occflow.warp import bilinear_warp, mesh_grid


class OffsetHead(Module):
    """
    One FFN emits 2·T_f channels; per step k the pair is tanh-squashed and
    scaled by ρ, giving offsets in feature cells. The last layer starts at
    zero so training begins from the identity warp.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D          = cfg.latent
        self.T_f   = cfg.T_f
        self.scale = float(cfg.fg_offset_scale)
        self.fc1   = Linear(D, D, rng)
        self.fc2   = Linear(D, 2 * cfg.T_f, rng)
        self.fc2.zero_init()

    def logits(self, h3: Tensor) -> Tensor:
        return self.fc2(self.fc1(h3).gelu())

    def forward(self, h3: Tensor) -> Tensor:
        """h3 (1, h, w, 4C) → offsets (T_f, h, w, 2), channels (x, y)."""
        _, h, w, _ = h3.shape
        z = self.logits(h3).tanh() * self.scale
        return z.reshape(h, w, self.T_f, 2).transpose(2, 0, 1, 3)


class FlowGuidedAttention(Module):
    """
    Shared query projection split into T_f heads; head k reads keys and values
    from h3 sampled at mesh-grid + offsets[k], adds its slice of a relative
    bias spanning the whole map, and has its own output projection. Each
    result joins h3 through a residual and a shared FFN.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D = cfg.latent
        h = cfg.feature_sizes[2]
        self.T_f     = cfg.T_f
        self.dim     = D
        self.warped  = cfg.use_fg_msa
        self.q_proj  = Linear(D, cfg.T_f * D, rng)
        self.kv_proj = ModuleList([Linear(D, 2 * D, rng) for _ in range(cfg.T_f)])
        self.out     = ModuleList([Linear(D, D, rng) for _ in range(cfg.T_f)])
        self.bias    = RelPosBias(h, cfg.T_f, rng)
        self.norm    = LayerNorm(D)
        self.ffn     = Mlp(D, rng, ratio=cfg.mlp_ratio, dropout=cfg.dropout)

    def sample(self, h3: Tensor, offsets_k: Optional[Tensor]) -> Tensor:
        """Keys/values source for one step: (h·w, 4C)."""
        _, h, w, D = h3.shape
        plane = h3.reshape(h, w, D)
        if self.warped and offsets_k is not None:
            plane = bilinear_warp(plane, offsets_k + mesh_grid(h, w))
        return plane.reshape(h * w, D)

    def attend(self, h3: Tensor, offsets: Optional[Tensor]) -> List[Tensor]:
        """Per-step attention outputs after W_k^O, each (1, h, w, 4C)."""
        _, h, w, D = h3.shape
        tokens = h3.reshape(h * w, D)
        q_all  = self.q_proj(tokens)
        bias   = self.bias()
        out: List[Tensor] = []
        for k in range(self.T_f):
            q  = q_all[:, k * D:(k + 1) * D]
            kv = self.kv_proj[k](self.sample(h3, None if offsets is None else offsets[k]))
            y  = msa(q, kv[:, :D], kv[:, D:], 1, bias=bias[k:k + 1], w_o=self.out[k])
            out.append(y.reshape(1, h, w, D))
        return out

    def forward(self, h3: Tensor, offsets: Optional[Tensor]) -> List[Tensor]:
        outs: List[Tensor] = []
        for a in self.attend(h3, offsets):
            x = h3 + a
            outs.append(x + self.ffn(self.norm(x)))
        return outs


class TrajectoryCrossAttention(Module):
    """
    Step-specific cross-attention: grid-cell queries h_k^O + W_k^f·h_k^f
    attend to agent tokens; residual add. With no valid agent the queries
    pass through unchanged.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D              = cfg.latent
        self.flow_proj = Linear(2, D, rng)
        self.norm      = LayerNorm(D)
        self.attn      = MultiHeadAttention(D, cfg.cross_heads, rng)

    def queries(self, h_o: Tensor, offsets_k: Tensor) -> Tensor:
        _, h, w, D = h_o.shape
        return h_o + self.flow_proj(offsets_k).reshape(1, h, w, D)

    def forward(self, h_o: Tensor, offsets_k: Tensor, agents: Optional[Tensor], mask: Optional[np.ndarray]) -> Tensor:
        q = self.queries(h_o, offsets_k)
        if agents is None or mask is None or not np.any(mask):
            return q
        _, h, w, D = q.shape
        tokens = q.reshape(h * w, D)
        att    = self.attn(self.norm(tokens), agents, mask=key_padding_mask(mask))
        return (tokens + att).reshape(1, h, w, D)
