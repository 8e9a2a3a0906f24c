"""
occflow/render.py
Binary PPM (P6) snapshots of occupancy, flow and flow-traced occupancy.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from skimage.color import hsv2rgb

from config import Colors
from occflow.errors import CorruptionError, OccFlowIOError
from occflow.scene import PredictionSet, Targets
from occflow.warp import flow_trace

log = logging.getLogger("occflow.render")


# ── PPM I/O ──────────────────────────────────────────────────────────────────────
def to_bytes(rgb: np.ndarray) -> np.ndarray:
    return np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: str, rgb: np.ndarray) -> None:
    H, W = rgb.shape[:2]
    header = f"P6\n{W} {H}\n255\n".encode("ascii")
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_bytes(header + to_bytes(rgb).tobytes())
    except OSError as exc:
        raise OccFlowIOError(f"cannot write image {path}: {exc}") from exc


def read_ppm(path: str) -> np.ndarray:
    """Reads back what write_ppm produces; returns (H, W, 3) uint8."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise OccFlowIOError(f"cannot read image {path}: {exc}") from exc
    parts = blob.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise CorruptionError(f"{path} is not a P6 image with maxval 255")
    W, H = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != H * W * 3:
        raise CorruptionError(f"{path}: expected {H * W * 3} pixel bytes, got {pixels.size}")
    return pixels.reshape(H, W, 3)


# ── Colouring ────────────────────────────────────────────────────────────────────
def occupancy_image(road: np.ndarray, obs: np.ndarray, occ: np.ndarray) -> np.ndarray:
    """Observed in red and occluded in green, alpha-blended over the road raster."""
    img = np.array(road, dtype=np.float64)
    for layer, color in ((obs, Colors.OBSERVED), (occ, Colors.OCCLUDED)):
        a   = np.clip(layer, 0.0, 1.0)[..., None]
        img = img * (1.0 - a) + np.asarray(color) * a
    return img


def flow_image(flow: np.ndarray) -> np.ndarray:
    """Hue from direction, value from magnitude relative to the frame maximum."""
    dx, dy = flow[..., 0], flow[..., 1]
    mag    = np.hypot(dx, dy)
    peak   = mag.max()
    hue    = (np.arctan2(dy, dx) + np.pi) / (2.0 * np.pi)
    value  = mag / peak if peak > 0 else np.zeros_like(mag)
    hsv    = np.stack([np.mod(hue, 1.0), np.ones_like(mag), value], axis=-1)
    return hsv2rgb(hsv)


def gray_image(grid: np.ndarray) -> np.ndarray:
    return np.repeat(np.clip(grid, 0.0, 1.0)[..., None], 3, axis=-1)


# ── Entry point ──────────────────────────────────────────────────────────────────
def render(
    preds: PredictionSet,
    targets: Optional[Targets],
    road: np.ndarray,
    out_dir: str,
    prefix: str = "",
) -> List[str]:
    """
    Writes occ_k / flow_k / trace_k images for k = 1..T_f into `out_dir`.
    The trace stream needs the current observed occupancy, so it is skipped
    without targets.
    """
    out   = Path(out_dir)
    paths: List[str] = []
    traced = flow_trace(targets.current_obs, preds) if targets is not None else None
    for k in range(len(preds)):
        frames = {
            "occ":  occupancy_image(road, preds.obs[k], preds.occ[k]),
            "flow": flow_image(preds.flow[k]),
        }
        if traced is not None:
            frames["trace"] = gray_image(traced[k].data)
        for stream, img in frames.items():
            path = str(out / f"{prefix}{stream}_{k + 1}.ppm")
            write_ppm(path, img)
            paths.append(path)
    log.info(f"✓ Rendered {len(paths)} image(s) to {out}")
    return paths


def render_ground_truth(targets: Targets, road: np.ndarray, out_dir: str, prefix: str = "gt_") -> List[str]:
    return render(PredictionSet.from_targets(targets), targets, road, out_dir, prefix)
