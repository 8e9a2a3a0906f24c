"""
commands/train.py  –  `train`: fit a model and write checkpoints + loss curve.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging

from commands import add_dataset_args, dataset_from_args, out_dir, resolve_config
from occflow.errors import OccFlowIOError
from occflow.trainer import train

log = logging.getLogger("occflow.cli.train")


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.epochs is not None:
        cfg = dataclasses.replace(cfg, epochs=args.epochs)
    dataset = dataset_from_args(args, cfg)
    result  = train(cfg, dataset, seed=args.seed, out_dir=str(out_dir(args, "checkpoints")), max_steps=args.steps)

    curve = out_dir(args, "loss_curve.json")
    try:
        curve.parent.mkdir(parents=True, exist_ok=True)
        curve.write_text(json.dumps({"config": cfg.to_dict(), "losses": result.losses}, indent=1), encoding="utf-8")
    except OSError as exc:
        raise OccFlowIOError(f"cannot write loss curve {curve}: {exc}") from exc
    log.info(f"✓ Final checkpoint {result.checkpoint}")
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("train", help="train on generated or stored scenarios")
    add_dataset_args(p)
    p.add_argument("--steps",  type=int, default=None, help="stop after this many steps")
    p.add_argument("--epochs", type=int, default=None, help="override the config epoch count")
    p.set_defaults(func=run)
