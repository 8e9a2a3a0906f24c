"""
commands/render.py  –  `render`: PPM snapshots of ground truth or of a checkpoint's predictions.
"""

from __future__ import annotations

import argparse

from commands import load_sample, out_dir, resolve_config
from occflow.checkpoint import load_weights
from occflow.rasterizer import build_sample
from occflow.render import render, render_ground_truth
from occflow.scenario_gen import ScenarioSpec, generate
from occflow.trainer import build_model


def run(args: argparse.Namespace) -> int:
    cfg    = resolve_config(args)
    sample = (load_sample(args.scenario, cfg) if args.scenario
              else build_sample(generate(args.seed, ScenarioSpec(n_agents=min(4, cfg.n_max)), cfg), cfg.n_max))
    target = str(out_dir(args, "render"))
    if args.checkpoint:
        model = build_model(cfg)
        load_weights(model, args.checkpoint, cfg.digest())
        render(model.predict(sample.inputs), sample.targets, sample.inputs.road, target)
    else:
        render_ground_truth(sample.targets, sample.inputs.road, target)
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("render", help="write occupancy / flow / flow-traced images")
    p.add_argument("--scenario", help="scenario file (default: generate from --seed)")
    p.add_argument("--checkpoint", help="render predictions instead of ground truth")
    p.set_defaults(func=run)
