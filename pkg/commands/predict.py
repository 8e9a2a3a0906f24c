"""
commands/predict.py  –  `predict`: run a checkpoint on one scenario.
"""

from __future__ import annotations

import argparse
import logging

import numpy as np

from commands import load_sample, out_dir, resolve_config
from occflow.checkpoint import load_weights
from occflow.errors import OccFlowIOError
from occflow.rasterizer import build_sample
from occflow.render import render
from occflow.scenario_gen import ScenarioSpec, generate
from occflow.trainer import build_model

log = logging.getLogger("occflow.cli.predict")


def run(args: argparse.Namespace) -> int:
    cfg    = resolve_config(args)
    sample = (load_sample(args.scenario, cfg) if args.scenario
              else build_sample(generate(args.seed, ScenarioSpec(n_agents=min(4, cfg.n_max)), cfg), cfg.n_max))
    model  = build_model(cfg)
    load_weights(model, args.checkpoint, cfg.digest())
    preds  = model.predict(sample.inputs)

    path = out_dir(args, "predictions.npz")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, obs=preds.obs, occ=preds.occ, flow=preds.flow)
    except OSError as exc:
        raise OccFlowIOError(f"cannot write predictions {path}: {exc}") from exc
    log.info(f"✓ Predictions written to {path}")

    if args.render:
        render(preds, sample.targets, sample.inputs.road, str(out_dir(args, "render")))
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("predict", help="predict occupancy and flow for one scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", help="scenario file (default: generate from --seed)")
    p.add_argument("--render", action="store_true", help="also write PPM snapshots")
    p.set_defaults(func=run)
