"""
occflow/warp.py
Differentiable bilinear warping and flow-traced occupancy.

Index channels are (x, y) = (column, row) in cell units; samples that fall
outside the source grid read zero.
"""

from __future__ import annotations

from typing import List, Sequence, Union

import numpy as np

from occflow.scene import FlowField, OccupancyGrid, PredictionSet
from occflow.errors import DimensionError
from occflow.tensor import ArrayLike, Function, Tensor, as_array, no_grad

_CORNERS = ((0, 0), (0, 1), (1, 0), (1, 1))


def interp_kernel(i: float, j: float) -> float:
    """m(i, j) = max(0, 1 − |i − j|)."""
    return max(0.0, 1.0 - abs(i - j))


def mesh_grid(H: int, W: int) -> np.ndarray:
    """(H, W, 2) identity indices; channel 0 is the column, channel 1 the row."""
    rows, cols = np.mgrid[0:H, 0:W].astype(np.float64)
    return np.stack([cols, rows], axis=-1)


class BilinearWarp(Function):
    """field (B, Hs, Ws, C), indices (B, H, W, 2) → (B, H, W, C)."""

    def forward(self, field, indices):
        if field.ndim != 4 or indices.ndim != 4 or indices.shape[-1] != 2 or field.shape[0] != indices.shape[0]:
            raise DimensionError(f"bilinear_warp: field {field.shape} vs indices {indices.shape}")
        B, Hs, Ws, _ = field.shape
        x, y   = indices[..., 0], indices[..., 1]
        x0, y0 = np.floor(x), np.floor(y)
        fx, fy = x - x0, y - y0
        batch  = np.broadcast_to(np.arange(B).reshape(B, 1, 1), x.shape)

        self.field_shape = field.shape
        self.corners = []
        out = np.zeros(indices.shape[:3] + (field.shape[3],), dtype=np.result_type(field, indices))
        for dy, dx in _CORNERS:
            xi = (x0 + dx).astype(np.int64)
            yi = (y0 + dy).astype(np.int64)
            wx = fx if dx else 1.0 - fx
            wy = fy if dy else 1.0 - fy
            ok = (xi >= 0) & (xi < Ws) & (yi >= 0) & (yi < Hs)
            value = field[batch, np.clip(yi, 0, Hs - 1), np.clip(xi, 0, Ws - 1)] * ok[..., None]
            out  += (wx * wy)[..., None] * value
            self.corners.append((dx, dy, xi, yi, wx, wy, ok, value, batch))
        return out

    def backward(self, grad):
        gfield = np.zeros(self.field_shape, dtype=grad.dtype)
        gidx   = np.zeros(grad.shape[:3] + (2,), dtype=grad.dtype)
        for dx, dy, xi, yi, wx, wy, ok, value, batch in self.corners:
            w = (wx * wy)[..., None] * grad
            np.add.at(gfield, (batch[ok], yi[ok], xi[ok]), w[ok])
            dot = (value * grad).sum(axis=-1)
            gidx[..., 0] += (1.0 if dx else -1.0) * wy * dot
            gidx[..., 1] += (1.0 if dy else -1.0) * wx * dot
        return gfield, gidx


def bilinear_warp(field: ArrayLike, indices: ArrayLike) -> Tensor:
    """
    out[y, x] = Σ m(Wx, x')·m(Wy, y')·field[y', x'] with zero padding.
    Accepts (H, W, C) / (H, W, 2) or a leading batch axis on both.
    """
    f = field if isinstance(field, Tensor) else Tensor(field)
    i = indices if isinstance(indices, Tensor) else Tensor(indices)
    if f.ndim == 3 and i.ndim == 3:
        return BilinearWarp.apply(f.reshape((1,) + f.shape), i.reshape((1,) + i.shape)).reshape(
            i.shape[:2] + (f.shape[-1],)
        )
    return BilinearWarp.apply(f, i)


def warp_occupancy(o_prev: ArrayLike, flow: ArrayLike) -> Tensor:
    """
    f_W(O_prev, F): sample O_prev at mesh-grid + F. Shapes (H, W) with
    (H, W, 2), or (B, H, W) with (B, H, W, 2).
    """
    o = o_prev if isinstance(o_prev, Tensor) else Tensor(o_prev)
    F = flow if isinstance(flow, Tensor) else Tensor(flow)
    if o.shape != F.shape[:-1]:
        raise DimensionError(f"warp_occupancy: occupancy {o.shape} vs flow {F.shape}")
    H, W = o.shape[-2:]
    idx  = F + mesh_grid(H, W)
    return bilinear_warp(o.reshape(o.shape + (1,)), idx).reshape(o.shape)


def flow_warp_occupancy(o_prev: OccupancyGrid, flow: FlowField) -> OccupancyGrid:
    with no_grad():
        warped = warp_occupancy(o_prev.data, flow.data)
    return OccupancyGrid(warped.data, o_prev.kind)


def flow_trace(o0: Union[OccupancyGrid, np.ndarray], preds: PredictionSet) -> List[OccupancyGrid]:
    """W_1 = f_W(O_0, F̂_1) ⊙ Ô_1; W_k = f_W(W_{k−1}, F̂_k) ⊙ Ô_k."""
    current = as_array(o0.data if isinstance(o0, OccupancyGrid) else o0)
    out: List[OccupancyGrid] = []
    with no_grad():
        for k in range(len(preds)):
            current = warp_occupancy(current, preds.flow[k]).data * preds.obs[k]
            out.append(OccupancyGrid(current, "observed"))
    return out
