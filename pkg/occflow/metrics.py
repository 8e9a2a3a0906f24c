"""
occflow/metrics.py
Occupancy AUC / Soft-IoU, flow end-point error, flow-traced metrics and the
seven-field report.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from occflow.errors import ContractError, OccFlowIOError
from occflow.scene import PredictionSet, Targets
from occflow.warp import flow_trace

log = logging.getLogger("occflow.metrics")

N_THRESHOLDS = 100


# ═══════════════════════════════════════════════════════════════
# SINGLE-GRID METRICS
# ═══════════════════════════════════════════════════════════════

def precision_recall_curve(
    pred: np.ndarray, gt: np.ndarray, n_thresholds: int = N_THRESHOLDS
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds linspace(0, 1); a cell is positive when pred ≥ t. No predicted positives → precision 1."""
    pred  = np.asarray(pred, dtype=np.float64).ravel()
    gt    = np.asarray(gt).ravel() > 0.5
    ts    = np.linspace(0.0, 1.0, n_thresholds)
    hits  = pred[None, :] >= ts[:, None]
    tp    = (hits & gt[None, :]).sum(axis=1).astype(np.float64)
    npred = hits.sum(axis=1).astype(np.float64)
    npos  = float(gt.sum())
    precision = np.where(npred > 0, tp / np.maximum(npred, 1.0), 1.0)
    recall    = tp / npos if npos > 0 else np.zeros_like(tp)
    return ts, precision, recall


def auc_pr(
    pred: np.ndarray,
    gt: np.ndarray,
    n_thresholds: int = N_THRESHOLDS,
    method: str = "trapezoid",
) -> float:
    """
    Area under the precision–recall points of the threshold sweep with
    (recall 0, precision 1) prepended, points ordered by recall then by
    descending precision. `method` is "trapezoid" or "step" (right rectangles).
    """
    if method not in ("trapezoid", "step"):
        raise ContractError(f"unknown AUC method {method!r}")
    if not np.any(np.asarray(gt) > 0.5):
        log.warning("auc_pr: ground truth has no positive cells; returning 0")
        return 0.0
    _, precision, recall = precision_recall_curve(pred, gt, n_thresholds)
    r = np.concatenate([[0.0], recall])
    p = np.concatenate([[1.0], precision])
    order = np.lexsort((-p, r))
    r, p  = r[order], p[order]
    dr    = np.diff(r)
    if method == "step":
        return float(np.sum(dr * p[1:]))
    return float(np.sum(dr * (p[1:] + p[:-1]) * 0.5))


def soft_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    p, g  = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    inter = float(np.sum(p * g))
    union = float(np.sum(p)) + float(np.sum(g)) - inter
    return inter / union if union > 0 else 0.0


def epe(flow_pred: np.ndarray, flow_gt: np.ndarray, occupied: np.ndarray) -> float:
    """Mean ‖F̂ − F‖₂ over occupied cells; 0 when nothing is occupied."""
    mask = np.asarray(occupied) > 0
    if not np.any(mask):
        return 0.0
    err = np.linalg.norm(np.asarray(flow_pred) - np.asarray(flow_gt), axis=-1)
    return float(err[mask].mean())


def ft_metrics(preds: PredictionSet, o0: np.ndarray, gt_obs: np.ndarray) -> Tuple[float, float]:
    """Flow-traced AUC and Soft-IoU against observed ground truth, averaged over non-empty steps."""
    traced = flow_trace(o0, preds)
    aucs, ious = [], []
    for k, w in enumerate(traced):
        if not np.any(gt_obs[k] > 0.5):
            continue
        aucs.append(auc_pr(w.data, gt_obs[k]))
        ious.append(soft_iou(w.data, gt_obs[k]))
    if not aucs:
        return 0.0, 0.0
    return float(np.mean(aucs)), float(np.mean(ious))


def offset_flow_correlation(offsets: np.ndarray, flow: np.ndarray) -> float:
    """Pearson r between per-step mean offsets and per-step mean flows, both (T_f, 2)."""
    a = np.asarray(offsets, dtype=np.float64).ravel()
    b = np.asarray(flow, dtype=np.float64).ravel()
    if a.std() == 0.0 or b.std() == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


# ═══════════════════════════════════════════════════════════════
# REPORT
# ═══════════════════════════════════════════════════════════════

@dataclass
class MetricsReport:
    observed_auc: float = 0.0
    observed_soft_iou: float = 0.0
    occluded_auc: float = 0.0
    occluded_soft_iou: float = 0.0
    flow_epe: float = 0.0
    ft_auc: float = 0.0
    ft_soft_iou: float = 0.0

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def write(self, path: str) -> None:
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(self.to_json() + "\n", encoding="utf-8")
        except OSError as exc:
            raise OccFlowIOError(f"cannot write report {path}: {exc}") from exc
        log.info(f"✓ Metrics report written to {path}")

    def summary(self) -> str:
        return "  ".join(f"{k}={v:.4f}" for k, v in self.to_dict().items())


class MetricAccumulator:
    """Collects per-step values per metric; compute() pools them in insertion order."""

    def __init__(self):
        self.values: Dict[str, List[float]] = {name: [] for name in MetricsReport.field_names()}

    def update(self, preds: PredictionSet, targets: Targets) -> None:
        occupied = np.maximum(targets.obs, targets.occ)
        for k in range(len(preds)):
            if np.any(targets.obs[k] > 0.5):
                self.values["observed_auc"].append(auc_pr(preds.obs[k], targets.obs[k]))
                self.values["observed_soft_iou"].append(soft_iou(preds.obs[k], targets.obs[k]))
            if np.any(targets.occ[k] > 0.5):
                self.values["occluded_auc"].append(auc_pr(preds.occ[k], targets.occ[k]))
                self.values["occluded_soft_iou"].append(soft_iou(preds.occ[k], targets.occ[k]))
            if np.any(occupied[k] > 0):
                self.values["flow_epe"].append(epe(preds.flow[k], targets.flow[k], occupied[k]))

        traced = flow_trace(targets.current_obs, preds)
        for k, w in enumerate(traced):
            if np.any(targets.obs[k] > 0.5):
                self.values["ft_auc"].append(auc_pr(w.data, targets.obs[k]))
                self.values["ft_soft_iou"].append(soft_iou(w.data, targets.obs[k]))

    def compute(self) -> MetricsReport:
        out = {}
        for name, vals in self.values.items():
            if not vals:
                log.warning(f"{name}: no step with non-empty ground truth; reporting 0")
            out[name] = float(np.mean(vals)) if vals else 0.0
        return MetricsReport(**out)

    def merge(self, other: "MetricAccumulator") -> None:
        for name, vals in other.values.items():
            self.values[name].extend(vals)

    def reset(self) -> None:
        self.__init__()


def evaluate_predictions(pairs: Sequence[Tuple[PredictionSet, Targets]]) -> MetricsReport:
    acc = MetricAccumulator()
    for preds, targets in pairs:
        acc.update(preds, targets)
    return acc.compute()
