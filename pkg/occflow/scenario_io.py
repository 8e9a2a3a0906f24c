"""
occflow/scenario_io.py
Scenario files: JSON with top-level keys grid / agents / road / seed / timing.
Floats are written with repr precision, so a load reproduces every field.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict

from occflow.errors import CorruptionError, OccFlowIOError
from occflow.scene import AgentState, GridSpec, Polyline, Scenario, Trajectory

FORMAT = "ofk-scenario/1"


def _state(s: AgentState) -> list:
    return [s.x, s.y, s.vx, s.vy, s.theta, s.valid]


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    g = scenario.grid
    return {
        "format": FORMAT,
        "seed": scenario.seed,
        "grid": {"H": g.H, "W": g.W, "meters_per_cell": g.meters_per_cell, "origin": list(g.origin)},
        "timing": {
            "history_steps": scenario.history_steps,
            "future_steps": scenario.future_steps,
            "history_dt": scenario.history_dt,
            "future_dt": scenario.future_dt,
        },
        "agents": [
            {
                "id": a.agent_id,
                "type": a.agent_type,
                "length": a.length,
                "width": a.width,
                "observed": a.observed,
                "states": [_state(s) for s in a.states],
                "future": [_state(s) for s in a.future_states],
            }
            for a in scenario.agents
        ],
        "road": [
            {"category": p.category, "light": p.light, "points": [list(pt) for pt in p.points]}
            for p in scenario.road
        ],
    }


def scenario_from_dict(d: Dict[str, Any]) -> Scenario:
    try:
        if d.get("format", FORMAT) != FORMAT:
            raise CorruptionError(f"unsupported scenario format {d.get('format')!r}")
        g, t = d["grid"], d["timing"]
        to_state = lambda v: AgentState(float(v[0]), float(v[1]), float(v[2]), float(v[3]), float(v[4]), bool(v[5]))
        return Scenario(
            agents=[
                Trajectory(
                    agent_id=int(a["id"]),
                    agent_type=a["type"],
                    states=[to_state(s) for s in a["states"]],
                    future_states=[to_state(s) for s in a.get("future", [])],
                    length=float(a["length"]),
                    width=float(a["width"]),
                    observed=bool(a["observed"]),
                )
                for a in d["agents"]
            ],
            road=[
                Polyline(p["category"], [(float(x), float(y)) for x, y in p["points"]], p.get("light", "none"))
                for p in d["road"]
            ],
            grid=GridSpec(int(g["H"]), int(g["W"]), float(g["meters_per_cell"]), tuple(g["origin"])),
            seed=int(d["seed"]),
            history_steps=int(t["history_steps"]),
            future_steps=int(t["future_steps"]),
            history_dt=float(t["history_dt"]),
            future_dt=float(t["future_dt"]),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptionError(f"malformed scenario record: {exc!r}") from exc


def save_scenario(scenario: Scenario, path: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=1), encoding="utf-8")
    except OSError as exc:
        raise OccFlowIOError(f"cannot write scenario {path}: {exc}") from exc


def load_scenario(path: str) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OccFlowIOError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptionError(f"{path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)
