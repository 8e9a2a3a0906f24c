"""
occflow/scenario_gen.py
Seeded synthetic scenes with exact ground truth.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

import config
from occflow.errors import ConfigError
from occflow.rasterizer import build_sample
from occflow.scene import (
    DEFAULT_EXTENTS,
    AgentState,
    ModelConfig,
    Polyline,
    Sample,
    Scenario,
    Trajectory,
    heading_vector,
    wrap_angle,
)

log = logging.getLogger("occflow.gen")

MOTIONS      = ("static", "linear", "turning", "mixed")
ROAD_LAYOUTS = ("straight", "cross", "t-junction")
MAX_YAW_RATE = 0.3

TYPE_PROBS  = {"vehicle": 0.6, "cyclist": 0.2, "pedestrian": 0.2}
SPEED_CAPS  = {"vehicle": None, "cyclist": 8.0, "pedestrian": 2.0}


@dataclass(frozen=True)
class ScenarioSpec:
    n_agents: int = 4
    n_occluded: int = 0
    motion: str = "linear"
    road_layout: str = "straight"
    grid_aligned: bool = False
    max_speed: float = 15.0

    def violations(self, n_max: int) -> List[str]:
        out: List[str] = []
        if self.n_agents < 0:
            out.append("n_agents must be ≥ 0")
        if self.n_agents > n_max:
            out.append(f"n_agents {self.n_agents} exceeds n_max {n_max}")
        if not 0 <= self.n_occluded <= self.n_agents:
            out.append(f"n_occluded {self.n_occluded} must be in [0, n_agents]")
        if self.motion not in MOTIONS:
            out.append(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if self.road_layout not in ROAD_LAYOUTS:
            out.append(f"road_layout must be one of {ROAD_LAYOUTS}, got {self.road_layout!r}")
        if not 0.0 <= self.max_speed <= 15.0:
            out.append(f"max_speed must be in [0, 15] m/s, got {self.max_speed}")
        return out


# ═══════════════════════════════════════════════════════════════
# KINEMATICS
# ═══════════════════════════════════════════════════════════════

def kinematic_states(
    x0: float, y0: float, theta0: float, speed: float, yaw_rate: float, times: Sequence[float]
) -> List[AgentState]:
    """Constant-turn-rate unicycle through (x0, y0, θ0) at t = 0; yaw_rate 0 is constant velocity."""
    out: List[AgentState] = []
    for t in times:
        theta = theta0 + yaw_rate * t
        c, s  = heading_vector(theta)
        if yaw_rate == 0.0:
            x = x0 + speed * c * t
            y = y0 + speed * s * t
        else:
            r = speed / yaw_rate
            x = x0 + r * (math.sin(theta) - math.sin(theta0))
            y = y0 - r * (math.cos(theta) - math.cos(theta0))
        out.append(AgentState(x, y, speed * c, speed * s, wrap_angle(theta)))
    return out


# ═══════════════════════════════════════════════════════════════
# ROAD LAYOUTS
# ═══════════════════════════════════════════════════════════════

def _road(layout: str, half: float, rng: np.random.Generator) -> List[Polyline]:
    lane, edge = 1.75, 3.5
    stop       = -edge - 1.0
    light      = lambda: str(rng.choice(["red", "yellow", "green"]))
    road: List[Polyline] = []

    if layout == "straight":
        road += [
            Polyline("road-edge", [(-half, -edge), (half, -edge)]),
            Polyline("road-edge", [(-half, edge), (half, edge)]),
            Polyline("lane", [(-half, -lane), (half, -lane)]),
            Polyline("lane", [(half, lane), (-half, lane)]),
            Polyline("crosswalk", [(0.3 * half, -edge), (0.3 * half, edge)]),
        ]
        return road

    # horizontal approach stops at the junction; the cross street is vertical
    road += [
        Polyline("road-edge", [(-half, -edge), (-edge, -edge)]),
        Polyline("road-edge", [(-half, edge), (-edge, edge)]),
        Polyline("lane", [(-half, -lane), (stop, -lane)], light()),
        Polyline("lane", [(half, lane), (-stop, lane)], light()),
        Polyline("road-edge", [(edge, -edge), (half, -edge)]),
        Polyline("road-edge", [(edge, edge), (half, edge)]),
        Polyline("crosswalk", [(stop, -edge), (stop, edge)]),
    ]
    if layout == "cross":
        road += [
            Polyline("road-edge", [(-edge, -half), (-edge, -edge)]),
            Polyline("road-edge", [(edge, -half), (edge, -edge)]),
            Polyline("lane", [(lane, -half), (lane, stop)], light()),
        ]
    road += [
        Polyline("road-edge", [(-edge, edge), (-edge, half)]),
        Polyline("road-edge", [(edge, edge), (edge, half)]),
        Polyline("lane", [(-lane, half), (-lane, -stop)], light()),
    ]
    return road


# ═══════════════════════════════════════════════════════════════
# GENERATION
# ═══════════════════════════════════════════════════════════════

def _snap_extent(meters: float, mpc: float) -> float:
    cells = max(2, 2 * int(round(meters / (2.0 * mpc))))
    return cells * mpc


def generate(seed: int, spec: ScenarioSpec, cfg: Optional[ModelConfig] = None) -> Scenario:
    cfg = cfg or ModelConfig()
    problems = spec.violations(cfg.n_max)
    if problems:
        raise ConfigError("infeasible scenario spec: " + "; ".join(problems))

    rng    = np.random.default_rng(seed)
    grid   = cfg.grid
    mpc    = grid.meters_per_cell
    half   = grid.W * mpc / 2.0
    hist_t = [s * 0.1 for s in range(-cfg.T_h, 1)]
    fut_t  = [k * 1.0 for k in range(1, cfg.T_f + 1)]
    types  = list(TYPE_PROBS)
    probs  = np.array([TYPE_PROBS[t] for t in types])

    agents: List[Trajectory] = []
    for agent_id in range(spec.n_agents):
        agent_type = str(rng.choice(types, p=probs))
        motion     = spec.motion if spec.motion != "mixed" else str(rng.choice(MOTIONS[:3]))
        cap        = SPEED_CAPS[agent_type]
        top        = spec.max_speed if cap is None else min(cap, spec.max_speed)
        speed      = 0.0 if motion == "static" else float(rng.uniform(0.0, top))
        yaw_rate   = float(rng.uniform(-MAX_YAW_RATE, MAX_YAW_RATE)) if motion == "turning" else 0.0
        theta      = float(rng.uniform(-math.pi, math.pi))
        x          = float(rng.uniform(-0.5, 0.5) * half)
        y          = float(rng.uniform(-0.5, 0.5) * half)
        length, width = DEFAULT_EXTENTS[agent_type]

        if spec.grid_aligned:
            theta    = (math.pi / 2) * int(rng.integers(-1, 3))
            yaw_rate = 0.0
            speed    = min(round(speed / mpc), math.floor(top / mpc)) * mpc
            x, y     = round(x / mpc) * mpc, round(y / mpc) * mpc
            length   = _snap_extent(length, mpc)
            width    = _snap_extent(width, mpc)

        agents.append(Trajectory(
            agent_id=agent_id,
            agent_type=agent_type,
            states=kinematic_states(x, y, theta, speed, yaw_rate, hist_t),
            future_states=kinematic_states(x, y, theta, speed, yaw_rate, fut_t),
            length=length,
            width=width,
            observed=agent_id >= spec.n_occluded,
        ))

    road = _road(spec.road_layout, half, rng)
    return Scenario(
        agents=agents,
        road=road,
        grid=grid,
        seed=seed,
        history_steps=cfg.T_h,
        future_steps=cfg.T_f,
        history_dt=0.1,
        future_dt=1.0,
    )


def make_dataset(seeds: Sequence[int], spec: ScenarioSpec, cfg: Optional[ModelConfig] = None) -> List[Sample]:
    """One Sample per seed, in seed order; generation fans out over config.THREADS workers."""
    cfg = cfg or ModelConfig()

    def one(seed: int) -> Sample:
        return build_sample(generate(seed, spec, cfg), cfg.n_max)

    workers = max(1, min(config.THREADS, len(seeds) or 1))
    if workers == 1:
        samples = [one(s) for s in seeds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(one, seeds))
    log.info(f"✓ Generated {len(samples)} scenario(s) ({spec.motion}, {spec.road_layout})")
    return samples
