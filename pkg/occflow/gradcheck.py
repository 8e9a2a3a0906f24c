"""
occflow/gradcheck.py
Finite-difference audit of every differentiable building block and of the
micro model end to end. Used by `main.py gradcheck` and the test-suite.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from occflow.attention import msa, shifted_window_attention
from occflow.fusion import FlowGuidedAttention, OffsetHead
from occflow.losses import bce_loss, flow_l1_loss, focal_loss, total_loss, warp_loss
from occflow.model import OccFlowNet
from occflow.rasterizer import build_sample
from occflow.scenario_gen import ScenarioSpec, generate
from occflow.scene import ModelConfig
from occflow.tensor import Tensor, default_dtype, finite_difference_check, parameter_gradient_check
from occflow.warp import bilinear_warp, mesh_grid

log = logging.getLogger("occflow.gradcheck")

TOLERANCE = 1e-4
FLOOR     = 1e-6


@dataclass
class GradCheckResult:
    name: str
    error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tolerance)


def randomize_offsets(head: OffsetHead, rng: np.random.Generator, scale: float = 0.5) -> None:
    """Moves the offset head off its zero start so sampled positions leave the integer grid."""
    head.fc2.weight.data = rng.normal(0.0, scale, head.fc2.weight.shape)
    if head.fc2.bias is not None:
        head.fc2.bias.data = rng.uniform(0.2, 0.8, head.fc2.bias.shape)


def fractional_indices(rng: np.random.Generator, H: int, W: int, reach: int = 1) -> np.ndarray:
    """Sampling positions whose fractional parts stay away from 0 and 1."""
    whole = rng.integers(-reach, reach + 1, (H, W, 2))
    frac  = rng.uniform(0.2, 0.8, (H, W, 2))
    return mesh_grid(H, W) + whole + frac


def _projected(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    weights = rng.normal(size=shape)
    return lambda t: (t * weights).sum()


# ═══════════════════════════════════════════════════════════════
# CHECKS
# ═══════════════════════════════════════════════════════════════

def check_msa(rng: np.random.Generator) -> List[GradCheckResult]:
    q, k, v = rng.normal(size=(4, 8)), rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
    bias    = rng.normal(0.0, 0.1, (2, 4, 5))
    proj    = _projected(rng, (4, 8))
    return [
        GradCheckResult("msa/query", finite_difference_check(lambda t: proj(msa(t, k, v, 2, bias)), q, floor=FLOOR)),
        GradCheckResult("msa/key",   finite_difference_check(lambda t: proj(msa(q, t, v, 2, bias)), k, floor=FLOOR)),
        GradCheckResult("msa/value", finite_difference_check(lambda t: proj(msa(q, k, t, 2, bias)), v, floor=FLOOR)),
    ]


def check_shifted_window(rng: np.random.Generator) -> List[GradCheckResult]:
    x    = rng.normal(size=(8, 8, 4))
    bias = rng.normal(0.0, 0.1, (2, 16, 16))
    proj = _projected(rng, x.shape)
    return [
        GradCheckResult(
            f"shifted_window_attention/shift={s}",
            finite_difference_check(lambda t: proj(shifted_window_attention(t, 4, s, bias, 2)), x, floor=FLOOR),
        )
        for s in (0, 2)
    ]


def check_bilinear_warp(rng: np.random.Generator) -> List[GradCheckResult]:
    field = rng.normal(size=(6, 6, 2))
    idx   = fractional_indices(rng, 6, 6)
    proj  = _projected(rng, (6, 6, 2))
    return [
        GradCheckResult("bilinear_warp/field",   finite_difference_check(lambda t: proj(bilinear_warp(t, idx)), field, floor=FLOOR)),
        GradCheckResult("bilinear_warp/indices", finite_difference_check(lambda t: proj(bilinear_warp(field, t)), idx, floor=FLOOR)),
    ]


def check_fg_msa(rng: np.random.Generator, max_coords: Optional[int] = 60) -> List[GradCheckResult]:
    cfg   = ModelConfig.preset("micro")
    head  = OffsetHead(cfg, rng)
    fg    = FlowGuidedAttention(cfg, rng)
    randomize_offsets(head, rng)
    _, _, h = cfg.feature_sizes
    h3    = rng.normal(size=(1, h, h, cfg.latent))
    projs = [_projected(rng, (1, h, h, cfg.latent)) for _ in range(cfg.T_f)]

    def loss(x: Tensor) -> Tensor:
        outs  = fg(x, head(x))
        total = projs[0](outs[0])
        for p, o in zip(projs[1:], outs[1:]):
            total = total + p(o)
        return total

    params = head.parameters() + fg.parameters()
    return [
        GradCheckResult("fg_msa/input", finite_difference_check(loss, h3, floor=FLOOR)),
        GradCheckResult(
            "fg_msa/parameters",
            parameter_gradient_check(lambda: loss(Tensor(h3)), params, floor=FLOOR, max_coords=max_coords),
        ),
    ]


def check_losses(rng: np.random.Generator) -> List[GradCheckResult]:
    shape   = (2, 6, 6)
    logits  = rng.normal(size=shape)
    targets = (rng.uniform(size=shape) > 0.6).astype(np.float64)
    prev    = (rng.uniform(size=shape) > 0.6).astype(np.float64)
    flow    = fractional_indices(rng, 6, 6)[None].repeat(2, axis=0) - mesh_grid(6, 6)
    probs   = rng.uniform(0.2, 0.8, shape)
    flow_gt = rng.normal(size=shape + (2,))
    return [
        GradCheckResult("loss/bce",   finite_difference_check(lambda t: bce_loss(t, targets), logits, floor=FLOOR)),
        GradCheckResult("loss/focal", finite_difference_check(lambda t: focal_loss(t, targets), logits, floor=FLOOR)),
        GradCheckResult("loss/warp/flow",
                        finite_difference_check(lambda t: warp_loss(prev, targets, t, probs), flow, floor=FLOOR)),
        GradCheckResult("loss/warp/occupancy",
                        finite_difference_check(lambda t: warp_loss(prev, targets, flow, t), probs, floor=FLOOR)),
        GradCheckResult("loss/flow_l1",
                        finite_difference_check(lambda t: flow_l1_loss(t, flow_gt, targets), flow, floor=FLOOR)),
    ]


def check_end_to_end(seed: int = 0, max_coords: Optional[int] = 40) -> List[GradCheckResult]:
    cfg   = ModelConfig.preset("micro", dropout=0.0)
    rng   = np.random.default_rng(seed)
    model = OccFlowNet(cfg, seed)
    randomize_offsets(model.offsets, rng, scale=0.2)
    model.eval()
    sample = build_sample(generate(seed, ScenarioSpec(n_agents=2, n_occluded=1, motion="mixed"), cfg), cfg.n_max)

    def loss() -> Tensor:
        out = model(sample.inputs)
        return total_loss(out.obs_logits, out.occ_logits, out.flow, sample.targets, cfg)[0]

    return [GradCheckResult(
        "model/micro",
        parameter_gradient_check(loss, model.parameters(), floor=FLOOR, max_coords=max_coords, seed=seed),
    )]


# ═══════════════════════════════════════════════════════════════
# SUITE
# ═══════════════════════════════════════════════════════════════

def run_gradient_suite(seed: int = 0, include_model: bool = True) -> List[GradCheckResult]:
    rng = np.random.default_rng(seed)
    results: List[GradCheckResult] = []
    with default_dtype(np.float64):
        results += check_msa(rng)
        results += check_shifted_window(rng)
        results += check_bilinear_warp(rng)
        results += check_fg_msa(rng)
        results += check_losses(rng)
        if include_model:
            results += check_end_to_end(seed)
    for r in results:
        mark = "✓" if r.passed else "✗"
        (log.info if r.passed else log.error)(f"{mark} {r.name}: max rel err {r.error:.2e}")
    return results


def count_failures(results: List[GradCheckResult]) -> int:
    return sum(not r.passed for r in results)


__all__ = [
    "GradCheckResult",
    "count_failures",
    "fractional_indices",
    "randomize_offsets",
    "run_gradient_suite",
]
