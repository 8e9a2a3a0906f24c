"""
occflow/oracles.py
Slow reference implementations written as plain loops, plus a ground-truth
consistency check. The self-test and the test-suite compare against them.
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from occflow.rasterizer import compute_backward_flow, footprint, rasterize_occupancy
from occflow.scene import Scenario, Trajectory
from occflow.warp import warp_occupancy


def auc_pr_loop(pred: np.ndarray, gt: np.ndarray, n_thresholds: int = 100, method: str = "trapezoid") -> float:
    cells = list(zip(np.ravel(pred).tolist(), (np.ravel(gt) > 0.5).tolist()))
    n_pos = sum(1 for _, g in cells if g)
    if n_pos == 0:
        return 0.0
    points: List[Tuple[float, float]] = [(0.0, 1.0)]
    for t in np.linspace(0.0, 1.0, n_thresholds).tolist():
        tp = fp = 0
        for p, g in cells:
            if p >= t:
                if g:
                    tp += 1
                else:
                    fp += 1
        precision = tp / (tp + fp) if tp + fp else 1.0
        points.append((tp / n_pos, precision))
    points.sort(key=lambda rp: (rp[0], -rp[1]))
    area = 0.0
    for (r0, p0), (r1, p1) in zip(points[:-1], points[1:]):
        area += (r1 - r0) * (p1 if method == "step" else 0.5 * (p0 + p1))
    return area


def soft_iou_loop(pred: np.ndarray, gt: np.ndarray) -> float:
    inter = sp = sg = 0.0
    for p, g in zip(np.ravel(pred).tolist(), np.ravel(gt).tolist()):
        inter += p * g
        sp    += p
        sg    += g
    union = sp + sg - inter
    return inter / union if union > 0 else 0.0


def epe_loop(flow_pred: np.ndarray, flow_gt: np.ndarray, occupied: np.ndarray) -> float:
    total, count = 0.0, 0
    H, W = occupied.shape
    for r in range(H):
        for c in range(W):
            if occupied[r, c] > 0:
                dx = flow_pred[r, c, 0] - flow_gt[r, c, 0]
                dy = flow_pred[r, c, 1] - flow_gt[r, c, 1]
                total += math.hypot(dx, dy)
                count += 1
    return total / count if count else 0.0


def shift_oracle(field: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = field[y + dy, x + dx], zero outside."""
    H, W = field.shape[:2]
    out  = np.zeros_like(field)
    for y in range(H):
        for x in range(W):
            sy, sx = y + dy, x + dx
            if 0 <= sy < H and 0 <= sx < W:
                out[y, x] = field[sy, sx]
    return out


# ── Rigid-scene warp consistency ─────────────────────────────────────────────────
def _fully_on_grid(scenario: Scenario, agent: Trajectory, step: int) -> bool:
    mpc   = scenario.grid.meters_per_cell
    state = agent.state_at(step)
    cells = round(agent.length / mpc) * round(agent.width / mpc)
    return state.valid and int(footprint(scenario.grid, state, agent.length, agent.width).sum()) == cells


def warp_consistency(scenario: Scenario) -> Dict[int, bool]:
    """
    For each future step k with every agent fully on the grid at k−1 and k:
    does warping the step k−1 occupancy along the ground-truth flow cover
    the step k occupancy exactly? Holds on grid-aligned rigid scenes.
    """
    out: Dict[int, bool] = {}
    for k in range(1, scenario.future_steps + 1):
        if not all(_fully_on_grid(scenario, a, k - 1) and _fully_on_grid(scenario, a, k) for a in scenario.agents):
            continue
        current = rasterize_occupancy(scenario, k, "both").data
        warped  = warp_occupancy(rasterize_occupancy(scenario, k - 1, "both").data,
                                 compute_backward_flow(scenario, k).data).data
        out[k] = bool(np.array_equal(warped * current, current))
    return out
