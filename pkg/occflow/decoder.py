"""
occflow/decoder.py
Shared pyramid decoder and the occupancy / flow heads.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.special import expit

from occflow.errors import ConfigError
from occflow.nn import Conv2d, Module, ModuleList
from occflow.scene import ModelConfig, PredictionSet
from occflow.tensor import Tensor, as_array, upsample_nearest


class PyramidDecoder(Module):
    """
    Four levels of ×2 nearest upsample → 3×3 conv → ELU, shared by every
    future step (the step axis is the batch axis). 1×1 projections of h_v^2
    and h_v^1 join after levels one and two; the H/2 level has no residual.
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d0, d1, d2, out = cfg.decoder_dims
        C               = cfg.C
        widths          = (cfg.latent, d0, d1, d2, d2)
        self.levels     = ModuleList([
            Conv2d(widths[i], widths[i + 1], 3, rng, padding=1) for i in range(4)
        ])
        self.res2       = Conv2d(2 * C, d0, 1, rng)
        self.res1       = Conv2d(C, d1, 1, rng)
        self.occ_head   = Conv2d(d2, out, 1, rng)
        self.flow_head  = Conv2d(d2, out, 1, rng)

    @staticmethod
    def _join(x: Tensor, residual: Tensor, name: str) -> Tensor:
        if x.shape[1:3] != residual.shape[1:3] or x.shape[-1] != residual.shape[-1]:
            raise ConfigError(f"decoder.{name}: residual {residual.shape} does not match level output {x.shape}")
        return x + residual

    def forward(self, fused: Tensor, h2: Tensor, h1: Tensor) -> Tuple[Tensor, Tensor]:
        """fused (T_f, H/16, W/16, 4C) → occupancy logits and flow, each (T_f, H, W, 2)."""
        x = fused
        for i, conv in enumerate(self.levels):
            x = conv(upsample_nearest(x, 2)).elu()
            if i == 0:
                x = self._join(x, self.res2(h2), "res2")
            elif i == 1:
                x = self._join(x, self.res1(h1), "res1")
        return self.occ_head(x), self.flow_head(x)


def to_predictions(occ_logits, flow) -> PredictionSet:
    """Sigmoid on both occupancy channels (observed, occluded); flow passes through."""
    probs = expit(as_array(occ_logits))
    return PredictionSet(
        obs=probs[..., 0].copy(),
        occ=probs[..., 1].copy(),
        flow=np.array(as_array(flow)),
    )
