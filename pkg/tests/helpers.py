"""
Scenario builders and small shared oracles for the test-suite.
"""

from typing import List, Optional

from occflow.scene import AgentState, GridSpec, Polyline, Scenario, Trajectory


def moving_agent(
    agent_id: int,
    x: float,
    y: float,
    vx: float = 0.0,
    vy: float = 0.0,
    theta: float = 0.0,
    T_h: int = 2,
    T_f: int = 2,
    agent_type: str = "vehicle",
    length: Optional[float] = None,
    width: Optional[float] = None,
    observed: bool = True,
    history_dt: float = 0.1,
    future_dt: float = 1.0,
) -> Trajectory:
    """Constant-velocity agent whose current state (step 0) sits at (x, y)."""
    hist = [AgentState(x + vx * s * history_dt, y + vy * s * history_dt, vx, vy, theta) for s in range(-T_h, 1)]
    fut  = [AgentState(x + vx * k * future_dt, y + vy * k * future_dt, vx, vy, theta) for k in range(1, T_f + 1)]
    return Trajectory(agent_id, agent_type, hist, fut, length, width, observed)


def make_scenario(
    agents: List[Trajectory],
    grid: Optional[GridSpec] = None,
    road: Optional[List[Polyline]] = None,
    T_h: int = 2,
    T_f: int = 2,
) -> Scenario:
    return Scenario(
        agents=agents,
        road=road or [],
        grid=grid or GridSpec(32, 32, 1.0),
        seed=0,
        history_steps=T_h,
        future_steps=T_f,
    )
