"""
occflow/rasterizer.py
Scenario → rasterised model inputs and ground truth.
"""

from __future__ import annotations

import math
from typing import Iterable, List, Tuple

import numpy as np
from skimage.draw import line

from config import Colors
from occflow.errors import ContractError, ValidationError
from occflow.scene import (
    AGENT_TYPES,
    AgentState,
    FlowField,
    GridSpec,
    ModelInputs,
    OccupancyGrid,
    RoadRaster,
    Sample,
    Scenario,
    Targets,
    Trajectory,
    heading_vector,
    validate,
)

INCLUDE_MODES = ("observed", "occluded", "both")

CATEGORY_COLORS = {
    "lane":      Colors.LANE,
    "road-edge": Colors.ROAD_EDGE,
    "crosswalk": Colors.CROSSWALK,
}

LIGHT_COLORS = {
    "red":    Colors.LIGHT_RED,
    "yellow": Colors.LIGHT_YELLOW,
    "green":  Colors.LIGHT_GREEN,
}

_BOX_TOL = 1e-9


# ── Geometry helpers ─────────────────────────────────────────────────────────────
def rotate_points(points: np.ndarray, angle: float) -> np.ndarray:
    """Rotate (..., 2) points counter-clockwise about the origin."""
    c, s = heading_vector(angle)
    return np.stack(
        [c * points[..., 0] - s * points[..., 1], s * points[..., 0] + c * points[..., 1]],
        axis=-1,
    )


def footprint(grid: GridSpec, state: AgentState, length: float, width: float) -> np.ndarray:
    """Cells whose centre lies inside the oriented box (edges inclusive)."""
    x, y  = grid.cell_centers()
    local = rotate_points(np.stack([x - state.x, y - state.y], axis=-1), -state.theta)
    return (np.abs(local[..., 0]) <= length / 2 + _BOX_TOL) & (np.abs(local[..., 1]) <= width / 2 + _BOX_TOL)


def _select(agents: Iterable[Trajectory], include: str) -> List[Trajectory]:
    if include not in INCLUDE_MODES:
        raise ContractError(f"include must be one of {INCLUDE_MODES}, got {include!r}")
    if include == "both":
        return list(agents)
    want = include == "observed"
    return [a for a in agents if a.observed == want]


def _check_step(scenario: Scenario, step: int, low: int) -> None:
    if not low <= step <= scenario.future_steps:
        raise ContractError(f"step {step} outside [{low}, {scenario.future_steps}]")


def _state(agent: Trajectory, step: int) -> AgentState:
    if step > 0 and len(agent.future_states) < step:
        return AgentState.invalid()
    return agent.state_at(step)


# ═══════════════════════════════════════════════════════════════
# OCCUPANCY
# ═══════════════════════════════════════════════════════════════

def rasterize_occupancy(scenario: Scenario, step: int, include: str = "observed") -> OccupancyGrid:
    _check_step(scenario, step, -scenario.history_steps)
    grid = scenario.grid
    out  = np.zeros((grid.H, grid.W))
    for agent in _select(scenario.agents, include):
        s = _state(agent, step)
        if s.valid:
            out[footprint(grid, s, agent.length, agent.width)] = 1.0
    return OccupancyGrid(out, "occluded" if include == "occluded" else "observed")


# ═══════════════════════════════════════════════════════════════
# FLOW
# ═══════════════════════════════════════════════════════════════

def displacement_flow(scenario: Scenario, step: int, source: int, include: str = "both") -> FlowField:
    """
    For every cell covered by an agent at `step`, the rigid-body image of the
    cell centre at `source` minus its position at `step`, in cells. The agent
    with the smaller agent_id wins contested cells.
    """
    grid   = scenario.grid
    mpc    = grid.meters_per_cell
    x, y   = grid.cell_centers()
    points = np.stack([x, y], axis=-1)
    flow   = np.zeros((grid.H, grid.W, 2))

    for agent in sorted(_select(scenario.agents, include), key=lambda a: a.agent_id, reverse=True):
        now, then = _state(agent, step), _state(agent, source)
        if not now.valid:
            continue
        mask = footprint(grid, now, agent.length, agent.width)
        if not then.valid:
            flow[mask] = 0.0
            continue
        local    = rotate_points(points[mask] - (now.x, now.y), -now.theta)
        previous = rotate_points(local, then.theta) + (then.x, then.y)
        flow[mask] = (previous - points[mask]) / mpc

    flow[..., 0] = np.clip(flow[..., 0], -grid.W / 2, grid.W / 2)
    flow[..., 1] = np.clip(flow[..., 1], -grid.H / 2, grid.H / 2)
    return FlowField(flow)


def compute_backward_flow(scenario: Scenario, step: int, include: str = "both") -> FlowField:
    """(x, y)_{step−1} − (x, y)_step on the footprints at `step`."""
    _check_step(scenario, step, -scenario.history_steps + 1)
    return displacement_flow(scenario, step, step - 1, include)


# ═══════════════════════════════════════════════════════════════
# ROAD MAP
# ═══════════════════════════════════════════════════════════════

def rasterize_roadmap(scenario: Scenario) -> RoadRaster:
    grid = scenario.grid
    out  = np.zeros((grid.H, grid.W, 3))

    def inside(rr, cc):
        keep = (rr >= 0) & (rr < grid.H) & (cc >= 0) & (cc < grid.W)
        return rr[keep], cc[keep]

    for poly in scenario.road:
        color = CATEGORY_COLORS.get(poly.category)
        if color is None:
            continue
        cells = [grid.cell_of(px, py) for px, py in poly.points]
        for (r0, c0), (r1, c1) in zip(cells[:-1], cells[1:]):
            rr, cc = inside(*line(r0, c0, r1, c1))
            out[rr, cc] = color

    for poly in scenario.road:
        if poly.category != "lane" or poly.light not in LIGHT_COLORS or not poly.points:
            continue
        r, c = grid.cell_of(*poly.points[-1])
        if 0 <= r < grid.H and 0 <= c < grid.W:
            out[r, c] = LIGHT_COLORS[poly.light]

    return RoadRaster(np.clip(out, 0.0, 1.0))


# ═══════════════════════════════════════════════════════════════
# MODEL INPUTS / TARGETS
# ═══════════════════════════════════════════════════════════════

def _require_valid(scenario: Scenario) -> None:
    problems = validate(scenario)
    if problems:
        raise ValidationError(problems)


def select_agents(scenario: Scenario, n_max: int) -> List[Trajectory]:
    """Observed agents with a valid current state, nearest to the ego first."""
    visible = [a for a in scenario.agents if a.observed and a.current.valid]
    visible.sort(key=lambda a: (math.hypot(a.current.x, a.current.y), a.agent_id))
    return visible[:n_max]


def build_inputs(scenario: Scenario, n_max: int) -> ModelInputs:
    _require_valid(scenario)
    T_h = scenario.history_steps

    occupancy = np.stack([
        rasterize_occupancy(scenario, s, "observed").data for s in range(-T_h, 1)
    ])
    road         = rasterize_roadmap(scenario).data
    flow_history = displacement_flow(scenario, 0, -T_h, "observed").data

    agents = np.zeros((n_max, T_h + 1, 5))
    valid  = np.zeros((n_max, T_h + 1), dtype=bool)
    types  = np.zeros((n_max, len(AGENT_TYPES)))
    mask   = np.zeros(n_max, dtype=bool)
    chosen = select_agents(scenario, n_max)
    for i, a in enumerate(chosen):
        for t, s in enumerate(a.states):
            if s.valid:
                agents[i, t] = s.as_vector()
                valid[i, t]  = True
        types[i, AGENT_TYPES.index(a.agent_type)] = 1.0
        mask[i] = True

    return ModelInputs(
        occupancy=occupancy,
        road=road,
        flow_history=flow_history,
        agents=agents,
        agent_valid=valid,
        agent_types=types,
        agent_mask=mask,
        agent_ids=[a.agent_id for a in chosen],
    )


def build_targets(scenario: Scenario) -> Targets:
    steps = range(1, scenario.future_steps + 1)
    return Targets(
        obs=np.stack([rasterize_occupancy(scenario, k, "observed").data for k in steps]),
        occ=np.stack([rasterize_occupancy(scenario, k, "occluded").data for k in steps]),
        flow=np.stack([compute_backward_flow(scenario, k, "both").data for k in steps]),
        current_obs=rasterize_occupancy(scenario, 0, "observed").data,
    )


def build_sample(scenario: Scenario, n_max: int) -> Sample:
    return Sample(build_inputs(scenario, n_max), build_targets(scenario), scenario)
