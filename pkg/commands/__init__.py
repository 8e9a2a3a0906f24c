"""
commands/__init__.py  –  Shared helpers for all subcommands.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import List

from occflow.errors import ConfigError, OccFlowIOError
from occflow.rasterizer import build_sample
from occflow.scenario_gen import MOTIONS, ROAD_LAYOUTS, ScenarioSpec, make_dataset
from occflow.scenario_io import load_scenario
from occflow.scene import ModelConfig, Sample, Scenario

log = logging.getLogger("occflow.cli")


# ── Config ───────────────────────────────────────────────────────────────────────
def resolve_config(args: argparse.Namespace) -> ModelConfig:
    if args.config:
        return ModelConfig.from_file(args.config, args.scale)
    return ModelConfig.preset(args.scale)


def out_dir(args: argparse.Namespace, *parts: str) -> Path:
    return Path(args.out).joinpath(*parts)


# ── Dataset arguments ────────────────────────────────────────────────────────────
def add_dataset_args(parser: argparse.ArgumentParser, count: int = 4) -> None:
    parser.add_argument("--scenarios", help="directory of scenario files (default: generate)")
    parser.add_argument("--count",     type=int, default=count, help="scenarios to generate")
    parser.add_argument("--agents",    type=int, default=4)
    parser.add_argument("--occluded",  type=int, default=0)
    parser.add_argument("--motion",    choices=MOTIONS, default="linear")
    parser.add_argument("--layout",    choices=ROAD_LAYOUTS, default="straight")
    parser.add_argument("--grid-aligned", action="store_true")
    parser.add_argument("--max-speed", type=float, default=15.0)


def spec_from_args(args: argparse.Namespace) -> ScenarioSpec:
    return ScenarioSpec(
        n_agents=args.agents,
        n_occluded=args.occluded,
        motion=args.motion,
        road_layout=args.layout,
        grid_aligned=args.grid_aligned,
        max_speed=args.max_speed,
    )


def check_fits(scenario: Scenario, cfg: ModelConfig, source: str) -> None:
    g = scenario.grid
    if (g.H, g.W) != (cfg.grid_size, cfg.grid_size) or scenario.history_steps != cfg.T_h \
            or scenario.future_steps != cfg.T_f:
        raise ConfigError(
            f"{source}: scenario grid {g.H}×{g.W}, T_h={scenario.history_steps}, T_f={scenario.future_steps} "
            f"does not match config {cfg.name} ({cfg.grid_size}, T_h={cfg.T_h}, T_f={cfg.T_f})"
        )


def load_sample(path: str, cfg: ModelConfig) -> Sample:
    scenario = load_scenario(path)
    check_fits(scenario, cfg, path)
    return build_sample(scenario, cfg.n_max)


def scenario_files(directory: str) -> List[Path]:
    root = Path(directory)
    if not root.is_dir():
        raise OccFlowIOError(f"scenario directory {directory} does not exist")
    files = sorted(root.glob("*.json"))
    if not files:
        raise OccFlowIOError(f"no scenario files in {directory}")
    return files


def dataset_from_args(args: argparse.Namespace, cfg: ModelConfig) -> List[Sample]:
    if args.scenarios:
        samples = [load_sample(str(p), cfg) for p in scenario_files(args.scenarios)]
        log.info(f"✓ Loaded {len(samples)} scenario(s) from {args.scenarios}")
        return samples
    seeds = range(args.seed, args.seed + args.count)
    return make_dataset(list(seeds), spec_from_args(args), cfg)
