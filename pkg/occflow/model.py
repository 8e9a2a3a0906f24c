"""
occflow/model.py
Full network: encoders → flow-guided attention → trajectory cross-attention
→ shared pyramid decoder.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from occflow.decoder import PyramidDecoder, to_predictions
from occflow.encoders import InteractionTransformer, TrajectoryEncoder, VisualEncoder
from occflow.errors import ConfigError, ContractError, DimensionError
from occflow.fusion import FlowGuidedAttention, OffsetHead, TrajectoryCrossAttention
from occflow.metrics import offset_flow_correlation
from occflow.nn import Module, ModuleList, count_parameters
from occflow.scene import ModelConfig, ModelInputs, PredictionSet, Sample
from occflow.tensor import Tensor, concat, default_dtype, no_grad

VELOCITY_SCALE = 10.0


@dataclass
class ModelOutput:
    obs_logits: Tensor           # (T_f, H, W)
    occ_logits: Tensor           # (T_f, H, W)
    flow: Tensor                 # (T_f, H, W, 2)
    offsets: Optional[Tensor]    # (T_f, H/16, W/16, 2)

    def predictions(self) -> PredictionSet:
        logits = np.stack([self.obs_logits.data, self.occ_logits.data], axis=-1)
        return to_predictions(logits, self.flow.data)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (DimensionError, ConfigError, ContractError) as exc:
        raise type(exc)(f"{name}: {exc.message}") from exc


def empty_inputs(cfg: ModelConfig) -> ModelInputs:
    H, T = cfg.grid_size, cfg.T_h + 1
    return ModelInputs(
        occupancy=np.zeros((T, H, H)),
        road=np.zeros((H, H, 3)),
        flow_history=np.zeros((H, H, 2)),
        agents=np.zeros((cfg.n_max, T, 5)),
        agent_valid=np.zeros((cfg.n_max, T), dtype=bool),
        agent_types=np.zeros((cfg.n_max, 3)),
        agent_mask=np.zeros(cfg.n_max, dtype=bool),
    )


class OccFlowNet(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        rng        = np.random.default_rng(seed)
        self.cfg   = cfg
        with default_dtype(cfg.dtype):
            self.visual = VisualEncoder(cfg, rng)
            if cfg.use_vector_encoding:
                self.trajectory  = TrajectoryEncoder(cfg, rng)
                self.interaction = InteractionTransformer(cfg, rng)
            if cfg.use_fg_msa:
                self.offsets = OffsetHead(cfg, rng)
            self.fg_msa  = FlowGuidedAttention(cfg, rng)
            if cfg.use_vector_encoding:
                self.cross = ModuleList([TrajectoryCrossAttention(cfg, rng) for _ in range(cfg.T_f)])
            self.decoder = PyramidDecoder(cfg, rng)

    # ───────── INPUT SCALING ─────────

    def _visual_inputs(self, inputs: ModelInputs):
        H = self.cfg.grid_size
        occ  = np.transpose(inputs.occupancy, (1, 2, 0))[None]
        road = inputs.road[None]
        flow = (inputs.flow_history / (H / 4.0))[None]
        return Tensor(occ), Tensor(road), Tensor(flow)

    def _vector_inputs(self, inputs: ModelInputs) -> Tensor:
        half  = self.cfg.grid_size * self.cfg.meters_per_cell / 2.0
        scale = np.array([half, half, VELOCITY_SCALE, VELOCITY_SCALE, np.pi])
        return Tensor(inputs.agents / scale)

    # ───────── FORWARD ─────────

    def forward(self, inputs: ModelInputs) -> ModelOutput:
        with default_dtype(self.cfg.dtype):
            return self._forward(inputs)

    def _forward(self, inputs: ModelInputs) -> ModelOutput:
        cfg = self.cfg
        with _stage("visual"):
            h1, h2, h3 = self.visual(*self._visual_inputs(inputs))
        _, h, w, _ = h3.shape

        offsets = None
        if cfg.use_fg_msa:
            with _stage("offsets"):
                offsets = self.offsets(h3)
        with _stage("fg_msa"):
            h_o = self.fg_msa(h3, offsets)

        if cfg.use_vector_encoding:
            with _stage("trajectory"):
                emb = self.trajectory(self._vector_inputs(inputs), inputs.agent_valid, Tensor(inputs.agent_types))
                h_s = self.interaction(emb, inputs.agent_mask)
            zero  = Tensor(np.zeros((h, w, 2)))
            fused: List[Tensor] = []
            with _stage("cross"):
                for k in range(cfg.T_f):
                    off_k = offsets[k] if offsets is not None else zero
                    fused.append(self.cross[k](h_o[k], off_k, h_s, inputs.agent_mask))
        else:
            fused = h_o

        with _stage("decoder"):
            occ, flow = self.decoder(concat(fused, axis=0), h2, h1)
        return ModelOutput(occ[..., 0], occ[..., 1], flow, offsets)

    def predict(self, inputs: ModelInputs) -> PredictionSet:
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                return self.forward(inputs).predictions()
        finally:
            self.train(was_training)


# ═══════════════════════════════════════════════════════════════
# ACCOUNTING / ANALYSIS
# ═══════════════════════════════════════════════════════════════

def input_memory_bytes(cfg: ModelConfig) -> int:
    """1 bit per occupancy cell, 2 bytes per road / history-flow value, 4 bytes per vector feature."""
    H    = cfg.grid_size
    occ  = (cfg.T_h + 1) * H * H
    ints = H * H * 3 + H * H * 2
    vec  = cfg.n_max * (cfg.T_h + 1) * (5 + 1) + cfg.n_max * 3
    return -(-occ // 8) + 2 * ints + 4 * vec


def model_offset_flow_correlation(model: OccFlowNet, sample: Sample) -> float:
    """Pearson r between per-step mean FG-MSA offsets and mean ground-truth flow on occupied cells."""
    if not model.cfg.use_fg_msa:
        return 0.0
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            offsets = model.forward(sample.inputs).offsets.data
    finally:
        model.train(was_training)
    t        = sample.targets
    occupied = np.maximum(t.obs, t.occ) > 0
    flow_mean = np.stack([
        t.flow[k][occupied[k]].mean(axis=0) if occupied[k].any() else np.zeros(2)
        for k in range(t.flow.shape[0])
    ])
    return offset_flow_correlation(offsets.mean(axis=(1, 2)), flow_mean)


__all__ = [
    "ModelOutput",
    "OccFlowNet",
    "count_parameters",
    "empty_inputs",
    "input_memory_bytes",
    "model_offset_flow_correlation",
]
