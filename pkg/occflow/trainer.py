"""
occflow/trainer.py
Training and evaluation loops.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from occflow.checkpoint import load_weights, save_weights
from occflow.errors import ContractError, TrainingDivergedError
from occflow.losses import total_loss
from occflow.metrics import MetricAccumulator, MetricsReport
from occflow.model import OccFlowNet, input_memory_bytes
from occflow.nn import count_parameters
from occflow.optim import Adam, lr_at_epoch
from occflow.scene import ModelConfig, PredictionSet, Sample, Targets
from occflow.tensor import default_dtype
from occflow.utils import fmt_bytes, fmt_count

log = logging.getLogger("occflow.train")


@dataclass
class TrainResult:
    model: OccFlowNet
    losses: List[float] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    steps: int = 0

    @property
    def checkpoint(self) -> Optional[str]:
        return self.checkpoints[-1] if self.checkpoints else None


def build_model(cfg: ModelConfig, seed: int = 0) -> OccFlowNet:
    """Parameters in the config's precision; the process-wide default dtype is left alone."""
    return OccFlowNet(cfg, seed)


# ═══════════════════════════════════════════════════════════════
# TRAIN
# ═══════════════════════════════════════════════════════════════

def train(
    cfg: ModelConfig,
    dataset: Sequence[Sample],
    seed: int = 0,
    out_dir: Optional[str] = None,
    max_steps: Optional[int] = None,
    model: Optional[OccFlowNet] = None,
) -> TrainResult:
    """
    Adam over single-sample steps with a per-epoch seeded shuffle.
    Gradients accumulate over `cfg.grad_accum` samples before each update;
    a checkpoint is written to `out_dir` at the end of every epoch.
    """
    if not dataset:
        raise ContractError("cannot train on an empty dataset")

    model  = model or build_model(cfg, seed)
    model.train()
    opt    = Adam(model.parameters(), cfg.lr)
    rng    = np.random.default_rng(seed)
    result = TrainResult(model=model)
    digest = cfg.digest()

    log.info(f"{config.BANNER} | {cfg.name} | {fmt_count(count_parameters(model))} params | "
             f"inputs {fmt_bytes(input_memory_bytes(cfg))}/sample | {len(dataset)} sample(s)")

    pending = 0
    done    = False
    for epoch in range(cfg.epochs):
        opt.lr = lr_at_epoch(epoch, cfg.lr, cfg.lr_decay, cfg.lr_decay_every)
        for i in rng.permutation(len(dataset)):
            sample = dataset[int(i)]
            with default_dtype(model.cfg.dtype):
                out    = model(sample.inputs)
                loss, terms = total_loss(out.obs_logits, out.occ_logits, out.flow, sample.targets, cfg)
                value  = loss.item()
                if not np.isfinite(value):
                    log.error(f"✗ Loss diverged at step {result.steps}: {value}")
                    raise TrainingDivergedError(result.steps, value)
                loss.backward()
            pending += 1
            if pending == cfg.grad_accum:
                opt.step(1.0 / pending)
                opt.zero_grad()
                pending = 0

            result.losses.append(value)
            result.steps += 1
            log.debug(f"step {result.steps} loss {value:.6f} " + " ".join(f"{k}={v:.4g}" for k, v in terms.items()))
            if result.steps % cfg.log_every == 0:
                log.info(f"epoch {epoch} step {result.steps} lr {opt.lr:.2e} loss {value:.6f}")
            if max_steps is not None and result.steps >= max_steps:
                done = True
                break

        if done and pending:
            opt.step(1.0 / pending)
            opt.zero_grad()
            pending = 0
        if out_dir is not None:
            path = str(Path(out_dir) / f"epoch_{epoch:03d}.ofk")
            save_weights(model, path, digest)
            result.checkpoints.append(path)
        if done:
            break

    if pending:
        opt.step(1.0 / pending)
        opt.zero_grad()
    model.eval()
    if result.losses:
        log.info(f"✓ Training finished after {result.steps} step(s): "
                 f"loss {result.losses[0]:.6f} → {result.losses[-1]:.6f}")
    return result


# ═══════════════════════════════════════════════════════════════
# EVALUATE
# ═══════════════════════════════════════════════════════════════

def predict_dataset(model: OccFlowNet, dataset: Sequence[Sample]) -> List[PredictionSet]:
    return [model.predict(s.inputs) for s in dataset]


def _accumulate(pair: Tuple[PredictionSet, Targets]) -> MetricAccumulator:
    acc = MetricAccumulator()
    acc.update(*pair)
    return acc


def score(pairs: Sequence[Tuple[PredictionSet, Targets]]) -> MetricsReport:
    """Per-sample metric work fans out over config.THREADS; pooling follows dataset order."""
    workers = max(1, min(config.THREADS, len(pairs) or 1))
    if workers == 1:
        parts = [_accumulate(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_accumulate, pairs))
    total = MetricAccumulator()
    for part in parts:
        total.merge(part)
    return total.compute()


def evaluate(
    model_or_checkpoint: Union[OccFlowNet, str],
    dataset: Sequence[Sample],
    cfg: Optional[ModelConfig] = None,
) -> MetricsReport:
    if isinstance(model_or_checkpoint, OccFlowNet):
        model = model_or_checkpoint
    else:
        if cfg is None:
            raise ContractError("evaluating a checkpoint needs its ModelConfig")
        model = build_model(cfg)
        load_weights(model, model_or_checkpoint, cfg.digest())
    preds  = predict_dataset(model, dataset)
    report = score([(p, s.targets) for p, s in zip(preds, dataset)])
    log.info(f"✓ Evaluated {len(dataset)} sample(s): {report.summary()}")
    return report


def evaluate_oracle(dataset: Sequence[Sample]) -> MetricsReport:
    """Ground truth scored as its own prediction."""
    return score([(PredictionSet.from_targets(s.targets), s.targets) for s in dataset])
