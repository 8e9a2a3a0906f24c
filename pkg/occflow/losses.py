"""
occflow/losses.py
Occupancy, focal, flow-warp and optional flow-regression losses and their
weighted combination.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from occflow.scene import ModelConfig, Targets
from occflow.tensor import ArrayLike, Tensor, as_array, as_tensor, bce_with_logits
from occflow.warp import warp_occupancy

WARP_EPS = 1e-7


def bce_loss(logits: ArrayLike, targets: ArrayLike) -> Tensor:
    """Σ over cells of the logit-stable binary cross-entropy."""
    return bce_with_logits(logits, as_array(targets)).sum()


def focal_loss(logits: ArrayLike, targets: ArrayLike, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Σ −α_t (1 − p_t)^γ ln p_t, α_t = α for positives and 1 − α for negatives."""
    z = as_tensor(logits)
    t = np.asarray(as_array(targets), dtype=np.float64)
    alpha_t = t * alpha + (1.0 - t) * (1.0 - alpha)
    ce      = bce_with_logits(z, t)
    if gamma == 0:
        return (ce * alpha_t).sum()
    p     = z.sigmoid()
    miss  = p * (1.0 - t) + (1.0 - p) * t
    return (ce * alpha_t * miss ** gamma).sum()


def probability_bce(probs: Tensor, targets: ArrayLike) -> Tensor:
    t = np.asarray(as_array(targets), dtype=np.float64)
    return -((probs.log() * t) + ((1.0 - probs).log() * (1.0 - t))).sum()


def warp_loss(o_prev_gt: ArrayLike, o_k_gt: ArrayLike, flow: ArrayLike, obs_prob: ArrayLike) -> Tensor:
    """
    BCE between clip(f_W(O_{k−1}, F̂_k) ⊙ Ô_k, ε, 1 − ε) and O_k, using
    ground-truth previous occupancy. Works per step or stacked over steps.
    """
    warped = warp_occupancy(as_array(o_prev_gt), flow) * obs_prob
    return probability_bce(warped.clip(WARP_EPS, 1.0 - WARP_EPS), o_k_gt)


def flow_l1_loss(flow: ArrayLike, flow_gt: ArrayLike, occupied: np.ndarray) -> Tensor:
    mask = np.asarray(occupied, dtype=np.float64)[..., None]
    return ((as_tensor(flow) - as_array(flow_gt)).abs() * mask).sum()


def previous_occupancy(targets: Targets) -> np.ndarray:
    """O_{k−1} ground truth for k = 1..T_f, seeded with the current occupancy."""
    return np.concatenate([targets.current_obs[None], targets.obs[:-1]], axis=0)


def total_loss(
    obs_logits: Tensor,
    occ_logits: Tensor,
    flow: Tensor,
    targets: Targets,
    cfg: Optional[ModelConfig] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """
    (w_obs·L_obs + w_occ·L_occ + w_warp·L_W + w_focal·L_F + w_flow_l1·L_1) / (h·w·T_f).
    Focal covers both occupancy streams. Returns the loss and the unweighted terms.
    """
    cfg = cfg or ModelConfig()
    T_f, h, w = targets.obs.shape

    l_obs   = bce_loss(obs_logits, targets.obs)
    l_occ   = bce_loss(occ_logits, targets.occ)
    l_warp  = warp_loss(previous_occupancy(targets), targets.obs, flow, obs_logits.sigmoid())
    l_focal = (focal_loss(obs_logits, targets.obs, cfg.focal_gamma, cfg.focal_alpha)
               + focal_loss(occ_logits, targets.occ, cfg.focal_gamma, cfg.focal_alpha))

    total = cfg.w_obs * l_obs + cfg.w_occ * l_occ + cfg.w_warp * l_warp + cfg.w_focal * l_focal
    terms = {
        "obs":   l_obs.item(),
        "occ":   l_occ.item(),
        "warp":  l_warp.item(),
        "focal": l_focal.item(),
    }
    if cfg.w_flow_l1:
        occupied = np.maximum(targets.obs, targets.occ)
        l_flow   = flow_l1_loss(flow, targets.flow, occupied)
        total    = total + cfg.w_flow_l1 * l_flow
        terms["flow_l1"] = l_flow.item()

    total = total * (1.0 / (h * w * T_f))
    terms["total"] = total.item()
    return total, terms
