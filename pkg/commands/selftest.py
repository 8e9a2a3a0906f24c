"""
commands/selftest.py  –  `selftest`: fast in-process oracle suites.
"""

from __future__ import annotations

import argparse
import logging
from typing import Callable, List, Tuple

import numpy as np

from commands import resolve_config
from occflow.errors import ValidationError
from occflow.gradcheck import run_gradient_suite
from occflow.metrics import auc_pr, epe, soft_iou
from occflow.model import OccFlowNet, input_memory_bytes
from occflow.nn import count_parameters, parameter_breakdown
from occflow.oracles import auc_pr_loop, epe_loop, shift_oracle, soft_iou_loop, warp_consistency
from occflow.scenario_gen import ScenarioSpec, make_dataset
from occflow.scene import ModelConfig
from occflow.trainer import evaluate_oracle
from occflow.utils import fmt_bytes, fmt_count, fmt_table
from occflow.warp import bilinear_warp, mesh_grid

log = logging.getLogger("occflow.cli.selftest")


# ── Suites ───────────────────────────────────────────────────────────────────────
def warp_suite(rng: np.random.Generator) -> List[str]:
    failures: List[str] = []
    field = rng.normal(size=(8, 8, 3))
    if not np.array_equal(bilinear_warp(field, mesh_grid(8, 8)).data, field):
        failures.append("identity warp is not exact")
    for dx, dy in ((1, 0), (0, -2), (3, 1)):
        shifted = bilinear_warp(field, mesh_grid(8, 8) + np.array([dx, dy], dtype=np.float64)).data
        if not np.allclose(shifted, shift_oracle(field, dx, dy), atol=1e-12):
            failures.append(f"integer shift ({dx}, {dy}) disagrees with the index oracle")
    return failures


def metric_suite(rng: np.random.Generator, cases: int = 50) -> List[str]:
    failures: List[str] = []
    for i in range(cases):
        pred = rng.uniform(size=(8, 8))
        gt   = (rng.uniform(size=(8, 8)) > 0.7).astype(np.float64)
        if not gt.any():
            gt[0, 0] = 1.0
        if abs(auc_pr(pred, gt) - auc_pr_loop(pred, gt)) > 1e-10:
            failures.append(f"auc_pr case {i}")
        if abs(soft_iou(pred, gt) - soft_iou_loop(pred, gt)) > 1e-12:
            failures.append(f"soft_iou case {i}")
        fp, fg = rng.normal(size=(8, 8, 2)), rng.normal(size=(8, 8, 2))
        if abs(epe(fp, fg, gt) - epe_loop(fp, fg, gt)) > 1e-12:
            failures.append(f"epe case {i}")
    return failures


def oracle_suite(seed: int) -> List[str]:
    cfg     = ModelConfig.preset("micro")
    dataset = make_dataset(range(seed, seed + 2), ScenarioSpec(n_agents=2, grid_aligned=True), cfg)
    report  = evaluate_oracle(dataset)
    failures: List[str] = []
    if report.observed_auc < 0.999:
        failures.append(f"ground-truth observed AUC {report.observed_auc:.4f} < 0.999")
    if report.flow_epe != 0.0:
        failures.append(f"ground-truth EPE {report.flow_epe:.4g} != 0")
    if report.ft_soft_iou < 0.999:
        failures.append(f"ground-truth FT-Soft-IoU {report.ft_soft_iou:.4f} < 0.999")
    for sample in dataset:
        bad = [k for k, ok in warp_consistency(sample.scenario).items() if not ok]
        if bad:
            failures.append(f"scenario {sample.scenario.seed}: warped occupancy misses step(s) {bad}")
    return failures


def gradient_suite(seed: int) -> List[str]:
    return [f"{r.name}: {r.error:.2e}" for r in run_gradient_suite(seed, include_model=False) if not r.passed]


SUITES: List[Tuple[str, Callable[[int], List[str]]]] = [
    ("warp",     lambda seed: warp_suite(np.random.default_rng(seed))),
    ("metrics",  lambda seed: metric_suite(np.random.default_rng(seed))),
    ("oracle",   oracle_suite),
    ("gradient", gradient_suite),
]


def run(args: argparse.Namespace) -> int:
    cfg   = resolve_config(args)
    model = OccFlowNet(cfg, args.seed)
    print(f"{cfg.name}: {fmt_count(count_parameters(model))} parameters, "
          f"{fmt_bytes(input_memory_bytes(cfg))} of inputs per sample")
    print(fmt_table(parameter_breakdown(model)))

    failures: List[str] = []
    for name, suite in SUITES:
        found = suite(args.seed)
        if found:
            log.error(f"✗ {name}: {len(found)} failure(s)")
            failures += [f"{name}: {f}" for f in found]
        else:
            log.info(f"✓ {name}")
    if failures:
        raise ValidationError(failures)
    print(f"✓ {len(SUITES)} self-test suites passed")
    return 0


def setup(subparsers) -> None:
    p = subparsers.add_parser("selftest", help="run the fast oracle suites")
    p.set_defaults(func=run)
