"""
occflow/scene.py
Scene and field types, model configuration presets, and invariant checks.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import singledispatch
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from occflow.errors import ConfigError, OccFlowIOError

AGENT_TYPES     = ("vehicle", "pedestrian", "cyclist")
ROAD_CATEGORIES = ("lane", "road-edge", "crosswalk")
LIGHT_STATES    = ("none", "red", "yellow", "green")

# length, width in meters
DEFAULT_EXTENTS: Dict[str, Tuple[float, float]] = {
    "vehicle":    (4.5, 2.0),
    "cyclist":    (1.8, 0.6),
    "pedestrian": (0.6, 0.6),
}


def wrap_angle(theta: float) -> float:
    """Map to (−π, π]."""
    return theta - 2.0 * math.pi * math.ceil((theta - math.pi) / (2.0 * math.pi))


def heading_vector(theta: float) -> Tuple[float, float]:
    """(cos θ, sin θ), exact on the four cardinal headings."""
    c, s = math.cos(theta), math.sin(theta)
    if abs(c - round(c)) < 1e-12 and abs(s - round(s)) < 1e-12:
        c, s = float(round(c)), float(round(s))
    return c, s


# ═══════════════════════════════════════════════════════════════
# VECTOR SCENE
# ═══════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class AgentState:
    x: float
    y: float
    vx: float
    vy: float
    theta: float
    valid: bool = True

    @classmethod
    def invalid(cls) -> "AgentState":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, valid=False)

    def as_vector(self) -> Tuple[float, float, float, float, float]:
        return (self.x, self.y, self.vx, self.vy, self.theta)


@dataclass
class Trajectory:
    agent_id: int
    agent_type: str
    states: List[AgentState]
    future_states: List[AgentState] = field(default_factory=list)
    length: Optional[float] = None
    width: Optional[float] = None
    observed: bool = True

    def __post_init__(self):
        default_l, default_w = DEFAULT_EXTENTS.get(self.agent_type, (1.0, 1.0))
        if self.length is None:
            self.length = default_l
        if self.width is None:
            self.width = default_w

    @property
    def current(self) -> AgentState:
        return self.states[-1]

    def state_at(self, step: int) -> AgentState:
        """Step 0 is the current state, negative steps are history, positive steps future."""
        if step <= 0:
            return self.states[len(self.states) - 1 + step]
        return self.future_states[step - 1]


@dataclass
class Polyline:
    category: str
    points: List[Tuple[float, float]]
    light: str = "none"


@dataclass(frozen=True)
class GridSpec:
    """
    Continuous grid coordinates put cell (r, c) over [r, r+1) × [c, c+1);
    `origin` is the (row, col) coordinate of the ego position, default the
    grid centre. Rows grow with y and columns with x.
    """

    H: int
    W: int
    meters_per_cell: float
    origin: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.origin is None:
            object.__setattr__(self, "origin", (self.H / 2.0, self.W / 2.0))

    @classmethod
    def square(cls, size: int, extent_m: float) -> "GridSpec":
        return cls(size, size, extent_m / size)

    def to_grid(self, x: float, y: float) -> Tuple[float, float]:
        """Meters → continuous (col, row)."""
        return x / self.meters_per_cell + self.origin[1], y / self.meters_per_cell + self.origin[0]

    def cell_of(self, x: float, y: float) -> Tuple[int, int]:
        col, row = self.to_grid(x, y)
        return int(math.floor(row)), int(math.floor(col))

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Meter coordinates (x, y) of every cell centre, each shaped (H, W)."""
        rows, cols = np.mgrid[0:self.H, 0:self.W].astype(np.float64)
        x = (cols + 0.5 - self.origin[1]) * self.meters_per_cell
        y = (rows + 0.5 - self.origin[0]) * self.meters_per_cell
        return x, y


@dataclass
class Scenario:
    agents: List[Trajectory]
    road: List[Polyline]
    grid: GridSpec
    seed: int
    history_steps: int
    future_steps: int
    history_dt: float = 0.1
    future_dt: float = 1.0

    def agent(self, agent_id: int) -> Trajectory:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


# ═══════════════════════════════════════════════════════════════
# RASTER FIELDS
# ═══════════════════════════════════════════════════════════════

@dataclass
class OccupancyGrid:
    """Single channel held as (H, W)."""

    data: np.ndarray
    kind: str = "observed"


@dataclass
class FlowField:
    """(H, W, 2) in cells per step, channels (dx, dy) = previous − current."""

    data: np.ndarray


@dataclass
class RoadRaster:
    data: np.ndarray


@dataclass
class ModelInputs:
    occupancy: np.ndarray      # (T_h+1, H, W) observed agents, oldest first
    road: np.ndarray           # (H, W, 3)
    flow_history: np.ndarray   # (H, W, 2) between −T_h and 0
    agents: np.ndarray         # (n_max, T_h+1, 5)
    agent_valid: np.ndarray    # (n_max, T_h+1) bool
    agent_types: np.ndarray    # (n_max, 3) one-hot
    agent_mask: np.ndarray     # (n_max,) bool
    agent_ids: List[int] = field(default_factory=list)


@dataclass
class Targets:
    obs: np.ndarray            # (T_f, H, W)
    occ: np.ndarray            # (T_f, H, W)
    flow: np.ndarray           # (T_f, H, W, 2)
    current_obs: np.ndarray    # (H, W), ground truth at step 0


@dataclass
class Sample:
    inputs: ModelInputs
    targets: Targets
    scenario: Optional[Scenario] = None


@dataclass
class PredictionSet:
    """One entry per future step along axis 0 of every stream."""

    obs: np.ndarray            # (T_f, H, W) in [0, 1]
    occ: np.ndarray            # (T_f, H, W) in [0, 1]
    flow: np.ndarray           # (T_f, H, W, 2)

    def __len__(self) -> int:
        return int(self.obs.shape[0])

    def observed(self, k: int) -> OccupancyGrid:
        return OccupancyGrid(self.obs[k], "observed")

    def occluded(self, k: int) -> OccupancyGrid:
        return OccupancyGrid(self.occ[k], "occluded")

    def flow_at(self, k: int) -> FlowField:
        return FlowField(self.flow[k])

    @classmethod
    def from_targets(cls, targets: Targets) -> "PredictionSet":
        return cls(targets.obs.copy(), targets.occ.copy(), targets.flow.copy())


# ═══════════════════════════════════════════════════════════════
# MODEL CONFIG
# ═══════════════════════════════════════════════════════════════

ARCHITECTURE_FIELDS = (
    "grid_size", "C", "T_h", "T_f", "n_max", "window", "stage_heads",
    "traj_heads", "interaction_heads", "cross_heads", "mlp_ratio",
    "decoder_dims", "fg_offset_scale", "use_fg_msa", "use_vector_encoding",
)


@dataclass
class ModelConfig:
    name: str = "desk"
    grid_size: int = 64
    meters_per_cell: float = 0.625
    C: int = 16
    T_h: int = 5
    T_f: int = 4
    n_max: int = 8
    window: int = 4
    stage_heads: Tuple[int, int, int] = (3, 6, 12)
    traj_heads: int = 4
    interaction_heads: int = 6
    cross_heads: int = 4
    mlp_ratio: int = 4
    decoder_dims: Tuple[int, int, int, int] = (32, 16, 8, 2)
    fg_offset_scale: Optional[float] = None
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    w_obs: float = 1000.0
    w_occ: float = 1000.0
    w_warp: float = 1000.0
    w_focal: float = 1.0
    w_flow_l1: float = 0.0
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_every: int = 3
    epochs: int = 10
    dropout: float = 0.0
    grad_accum: int = 1
    log_every: int = 10
    precision: str = "float64"
    use_fg_msa: bool = True
    use_vector_encoding: bool = True

    def __post_init__(self):
        self.stage_heads  = tuple(self.stage_heads)
        self.decoder_dims = tuple(self.decoder_dims)
        if self.fg_offset_scale is None:
            self.fg_offset_scale = (self.grid_size / 16) / 2.0
        problems = self.violations()
        if problems:
            raise ConfigError("; ".join(problems))

    # ───────── DERIVED ─────────

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_size, self.grid_size, self.meters_per_cell)

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    @property
    def fg_heads(self) -> int:
        return self.T_f

    @property
    def latent(self) -> int:
        return 4 * self.C

    @property
    def feature_sizes(self) -> Tuple[int, int, int]:
        return self.grid_size // 4, self.grid_size // 8, self.grid_size // 16

    # ───────── CHECKS ─────────

    def violations(self) -> List[str]:
        out: List[str] = []
        for name in ("grid_size", "C", "T_h", "T_f", "n_max", "window", "epochs", "grad_accum", "log_every"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive")
        if self.meters_per_cell <= 0:
            out.append("meters_per_cell must be positive")
        if self.grid_size % 16:
            out.append(f"grid_size {self.grid_size} must be divisible by 16")
        elif (self.grid_size // 16) % self.window:
            out.append(f"H/16 = {self.grid_size // 16} must be divisible by window {self.window}")
        if len(self.stage_heads) != 3 or any(h <= 0 for h in self.stage_heads):
            out.append(f"stage_heads must be three positive counts, got {self.stage_heads}")
        if len(self.decoder_dims) != 4 or any(d <= 0 for d in self.decoder_dims):
            out.append(f"decoder_dims must be four positive dims, got {self.decoder_dims}")
        elif self.decoder_dims[-1] != 2:
            out.append(f"decoder_dims must end with 2, got {self.decoder_dims}")
        for name in ("traj_heads", "interaction_heads", "cross_heads", "mlp_ratio"):
            if getattr(self, name) <= 0:
                out.append(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            out.append(f"dropout must be in [0, 1), got {self.dropout}")
        if self.focal_gamma < 0:
            out.append(f"focal_gamma must be ≥ 0, got {self.focal_gamma}")
        if not 0.0 < self.focal_alpha < 1.0:
            out.append(f"focal_alpha must be in (0, 1), got {self.focal_alpha}")
        if self.fg_offset_scale is not None and self.fg_offset_scale <= 0:
            out.append("fg_offset_scale must be positive")
        if self.precision not in ("float64", "float32"):
            out.append(f"precision must be float64 or float32, got {self.precision!r}")
        if self.lr <= 0:
            out.append("lr must be positive")
        return out

    # ───────── PRESETS / FILES ─────────

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        try:
            base = dict(PRESETS[name])
        except KeyError:
            raise ConfigError(f"unknown scale {name!r}; choose from {sorted(PRESETS)}") from None
        base.update(overrides)
        return cls(name=name, **base)

    @classmethod
    def from_file(cls, path: str, scale: str = "desk") -> "ModelConfig":
        try:
            overrides = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise OccFlowIOError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError(f"{path} must hold a JSON object")
        known   = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {unknown}")
        return cls.preset(overrides.pop("name", scale), **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> bytes:
        """sha256 over the fields that decide parameter names and shapes."""
        arch = {k: getattr(self, k) for k in ARCHITECTURE_FIELDS}
        arch = {k: list(v) if isinstance(v, tuple) else v for k, v in arch.items()}
        blob = json.dumps(arch, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


PRESETS: Dict[str, dict] = {
    "full": dict(
        grid_size=256, meters_per_cell=0.3125, C=96, T_h=10, T_f=8, n_max=64,
        window=8, decoder_dims=(192, 96, 48, 2), lr=1e-4, epochs=10, dropout=0.1,
    ),
    "desk": dict(
        grid_size=64, meters_per_cell=0.625, C=16, T_h=5, T_f=4, n_max=8,
        window=4, decoder_dims=(32, 16, 8, 2), lr=1e-3,
    ),
    "micro": dict(
        grid_size=32, meters_per_cell=1.25, C=6, T_h=2, T_f=2, n_max=3,
        window=2, decoder_dims=(8, 6, 4, 2), lr=1e-3,
    ),
}


# ═══════════════════════════════════════════════════════════════
# VALIDATION  (report, don't throw)
# ═══════════════════════════════════════════════════════════════

@singledispatch
def validate(obj, **kwargs) -> List[str]:
    raise TypeError(f"no validator for {type(obj).__name__}")


def _state_violations(label: str, s: AgentState) -> List[str]:
    out: List[str] = []
    values = s.as_vector()
    if not all(math.isfinite(v) for v in values):
        out.append(f"{label}: non-finite state")
    if s.valid and not (-math.pi < s.theta <= math.pi):
        out.append(f"{label}: theta {s.theta} outside (−π, π]")
    if not s.valid and any(v != 0.0 for v in values):
        out.append(f"{label}: invalid state carries non-zero fields")
    return out


@validate.register
def _(scenario: Scenario, **kwargs) -> List[str]:
    out: List[str] = []
    seen_ids: set = set()
    for a in scenario.agents:
        tag = f"agent {a.agent_id}"
        if a.agent_id in seen_ids:
            out.append(f"{tag}: duplicate agent_id")
        seen_ids.add(a.agent_id)
        if a.agent_type not in AGENT_TYPES:
            out.append(f"{tag}: unknown agent_type {a.agent_type!r}")
        if not (a.length and a.length > 0 and a.width and a.width > 0):
            out.append(f"{tag}: length and width must be positive")
        if len(a.states) != scenario.history_steps + 1:
            out.append(f"{tag}: {len(a.states)} states, expected T_h+1 = {scenario.history_steps + 1}")
        if a.future_states and len(a.future_states) != scenario.future_steps:
            out.append(f"{tag}: {len(a.future_states)} future states, expected T_f = {scenario.future_steps}")
        for i, s in enumerate(a.states):
            out.extend(_state_violations(f"{tag} state {i}", s))
        for i, s in enumerate(a.future_states):
            out.extend(_state_violations(f"{tag} future {i + 1}", s))
    for i, p in enumerate(scenario.road):
        if p.category not in ROAD_CATEGORIES:
            out.append(f"road {i}: unknown category {p.category!r}")
        if p.light not in LIGHT_STATES:
            out.append(f"road {i}: unknown light state {p.light!r}")
        if len(p.points) < 2:
            out.append(f"road {i}: polyline needs at least 2 points")
    if scenario.grid.meters_per_cell <= 0:
        out.append("grid: meters_per_cell must be positive")
    return out


@validate.register
def _(grid: OccupancyGrid, binary: bool = False, **kwargs) -> List[str]:
    d = grid.data
    out: List[str] = []
    if d.ndim != 2:
        out.append(f"occupancy ({grid.kind}): expected (H, W), got {d.shape}")
    if not np.all(np.isfinite(d)):
        out.append(f"occupancy ({grid.kind}): non-finite values")
    elif d.size and (d.min() < 0.0 or d.max() > 1.0):
        out.append(f"occupancy ({grid.kind}): values outside [0, 1]")
    if binary and not np.all((d == 0.0) | (d == 1.0)):
        out.append(f"occupancy ({grid.kind}): ground truth must be binary")
    return out


@validate.register
def _(flow: FlowField, occupancy: Optional[np.ndarray] = None, **kwargs) -> List[str]:
    d = flow.data
    out: List[str] = []
    if d.ndim != 3 or d.shape[-1] != 2:
        return [f"flow: expected (H, W, 2), got {d.shape}"]
    H, W = d.shape[:2]
    if not np.all(np.isfinite(d)):
        out.append("flow: non-finite values")
        return out
    if np.any(np.abs(d[..., 0]) > W / 2):
        out.append(f"flow: dx outside ±W/2 = ±{W / 2:g}")
    if np.any(np.abs(d[..., 1]) > H / 2):
        out.append(f"flow: dy outside ±H/2 = ±{H / 2:g}")
    if occupancy is not None and np.any((occupancy == 0) & np.any(d != 0, axis=-1)):
        out.append("flow: non-zero flow on unoccupied cells")
    return out


@validate.register
def _(raster: RoadRaster, **kwargs) -> List[str]:
    d = raster.data
    if d.ndim != 3 or d.shape[-1] != 3:
        return [f"road raster: expected (H, W, 3), got {d.shape}"]
    if d.size and (d.min() < 0.0 or d.max() > 1.0):
        return ["road raster: values outside [0, 1]"]
    return []


@validate.register
def _(preds: PredictionSet, **kwargs) -> List[str]:
    out: List[str] = []
    n = len(preds)
    if preds.occ.shape[0] != n or preds.flow.shape[0] != n:
        out.append(f"prediction streams disagree on step count: {preds.obs.shape[0]}, {preds.occ.shape[0]}, {preds.flow.shape[0]}")
    if preds.obs.shape[1:] != preds.occ.shape[1:] or preds.obs.shape[1:] != preds.flow.shape[1:3]:
        out.append("prediction streams disagree on grid shape")
    for k in range(n):
        out.extend(validate(preds.observed(k)))
        out.extend(validate(preds.occluded(k)))
    if not np.all(np.isfinite(preds.flow)):
        out.append("flow: non-finite values")
    return out


@validate.register
def _(sample: Sample, **kwargs) -> List[str]:
    out: List[str] = []
    t = sample.targets
    if sample.scenario is not None:
        out.extend(validate(sample.scenario))
    for k in range(t.obs.shape[0]):
        out.extend(validate(OccupancyGrid(t.obs[k], "observed"), binary=True))
        out.extend(validate(OccupancyGrid(t.occ[k], "occluded"), binary=True))
        either = np.maximum(t.obs[k], t.occ[k])
        out.extend(validate(FlowField(t.flow[k]), occupancy=either))
    out.extend(validate(FlowField(sample.inputs.flow_history)))
    out.extend(validate(RoadRaster(sample.inputs.road)))
    return out
