"""
occflow/encoders.py
Patch embedding, the three-stage windowed-attention visual encoder with its
flow shortcut, and the trajectory / interaction encoders.
"""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from occflow.attention import MultiHeadAttention, WindowAttention, key_padding_mask
from occflow.errors import ConfigError
from occflow.nn import Conv2d, Dropout, LayerNorm, Linear, Mlp, Module
from occflow.scene import ModelConfig
from occflow.tensor import Tensor, concat


# ═══════════════════════════════════════════════════════════════
# VISUAL BRANCH
# ═══════════════════════════════════════════════════════════════

class PatchEmbed(Module):
    """Separate 4×4 stride-4 convolutions for occupancy, road map and history flow."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.channels = (cfg.T_h + 1, 3, 2)
        self.occ  = Conv2d(cfg.T_h + 1, cfg.C, 4, rng, stride=4)
        self.road = Conv2d(3, cfg.C, 4, rng, stride=4)
        self.flow = Conv2d(2, cfg.C, 4, rng, stride=4)

    def forward(self, occ: Tensor, road: Tensor, flow: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        for name, x, want in zip(("occupancy", "road", "flow"), (occ, road, flow), self.channels):
            if x.shape[-1] != want:
                raise ConfigError(f"patch_embed: {name} input has {x.shape[-1]} channels, expected {want}")
        return self.occ(occ), self.road(road), self.flow(flow)


class SwinLayer(Module):
    """Pre-norm window attention and MLP, each with a residual."""

    def __init__(self, dim: int, heads: int, window: int, shift: int, rng: np.random.Generator, dropout: float = 0.0):
        self.shift = shift
        self.norm1 = LayerNorm(dim)
        self.attn  = WindowAttention(dim, heads, window, rng)
        self.drop  = Dropout(dropout, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp   = Mlp(dim, rng, dropout=dropout)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.drop(self.attn(self.norm1(x), self.shift))
        return x + self.mlp(self.norm2(x))


class SwinBlock(Module):
    """One W-SA layer followed by one SW-SA layer on an extent×extent map."""

    def __init__(self, dim: int, heads: int, window: int, extent: int, rng: np.random.Generator, dropout: float = 0.0):
        w          = min(window, extent)
        shift      = w // 2 if extent > w else 0
        self.wsa   = SwinLayer(dim, heads, w, 0, rng, dropout)
        self.swsa  = SwinLayer(dim, heads, w, shift, rng, dropout)

    def forward(self, x: Tensor) -> Tensor:
        return self.swsa(self.wsa(x))


class PatchMerging(Module):
    """2×2 neighbourhood concat → LayerNorm → Linear 4C → 2C."""

    def __init__(self, dim: int, rng: np.random.Generator):
        self.norm      = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        parts = [x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]]
        return self.reduction(self.norm(concat(parts, axis=-1)))


class VisualEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        C, heads, w = cfg.C, cfg.stage_heads, cfg.window
        s1, s2, s3  = cfg.feature_sizes
        self.embed  = PatchEmbed(cfg, rng)
        self.stage1 = SwinBlock(C, heads[0], w, s1, rng, cfg.dropout)
        self.flow   = SwinBlock(C, heads[0], w, s1, rng, cfg.dropout)
        self.merge1 = PatchMerging(C, rng)
        self.stage2 = SwinBlock(2 * C, heads[1], w, s2, rng, cfg.dropout)
        self.merge2 = PatchMerging(2 * C, rng)
        self.stage3 = SwinBlock(4 * C, heads[2], w, s3, rng, cfg.dropout)

    def forward(self, occ: Tensor, road: Tensor, flow: Tensor) -> List[Tensor]:
        """Inputs (1, H, W, ·); returns [h_v^1, h_v^2, h_v^3]."""
        e_occ, e_road, e_flow = self.embed(occ, road, flow)
        h1 = self.stage1(e_occ + e_road) + self.flow(e_flow)
        h2 = self.stage2(self.merge1(h1))
        h3 = self.stage3(self.merge2(h2))
        return [h1, h2, h3]


# ═══════════════════════════════════════════════════════════════
# VECTOR BRANCH
# ═══════════════════════════════════════════════════════════════

def sinusoidal_encoding(length: int, dim: int) -> np.ndarray:
    pos  = np.arange(length)[:, None]
    rate = np.exp(-np.log(10000.0) * (np.arange(0, dim, 2) / dim))
    pe   = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * rate)
    pe[:, 1::2] = np.cos(pos * rate)[:, : dim // 2]
    return pe


class TrajectoryEncoder(Module):
    """
    Per-timestep embedding + sinusoidal time encoding → masked 4-head
    self-attention over time → max-pool over valid steps → concat with the
    agent-type embedding → MLP. Output width 4C.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        D               = cfg.latent
        self.dim        = D
        self.embed      = Linear(5, D, rng)
        self.pe         = sinusoidal_encoding(cfg.T_h + 1, D)
        self.attn       = MultiHeadAttention(D, cfg.traj_heads, rng)
        self.type_embed = Linear(3, D, rng)
        self.fc1        = Linear(2 * D, D, rng)
        self.fc2        = Linear(D, D, rng)

    def forward(self, states: Tensor, valid: np.ndarray, types: Tensor) -> Tensor:
        """states (n, T, 5), valid (n, T) bool, types (n, 3) → (n, 4C)."""
        valid  = np.asarray(valid, dtype=bool)
        tokens = self.embed(states) + self.pe
        att    = self.attn(tokens, mask=key_padding_mask(valid))
        pooled = (att + np.where(valid, 0.0, -1e9)[..., None]).max(axis=1)
        pooled = pooled * valid.any(axis=1, keepdims=True).astype(np.float64)
        h      = concat([pooled, self.type_embed(types)], axis=-1)
        return self.fc2(self.fc1(h).gelu())


class InteractionTransformer(Module):
    """Masked multi-head self-attention across agents with a residual; invalid slots are zeroed."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.norm = LayerNorm(cfg.latent)
        self.attn = MultiHeadAttention(cfg.latent, cfg.interaction_heads, rng)

    def forward(self, emb: Tensor, mask: np.ndarray) -> Tensor:
        mask = np.asarray(mask, dtype=bool)
        out  = emb + self.attn(self.norm(emb), mask=key_padding_mask(mask))
        return out * mask[:, None].astype(np.float64)
