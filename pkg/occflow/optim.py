"""
occflow/optim.py
Adam with bias correction and the step-decay learning-rate schedule.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from occflow.errors import ContractError
from occflow.nn import Parameter


def init_adam_state(params: Sequence[Parameter]) -> Dict[str, object]:
    return {
        "t": 0,
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
    }


def adam_step(
    params: Sequence[Parameter],
    grads: Sequence[Optional[np.ndarray]],
    state: Dict[str, object],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Dict[str, object]:
    """
    One Adam update applied in place to `params`. A missing gradient is
    treated as zero. Returns `state` (mutated).
    """
    if len(params) != len(grads):
        raise ContractError(f"adam_step: {len(params)} params but {len(grads)} grads")
    state["t"] = t = int(state["t"]) + 1
    m: List[np.ndarray] = state["m"]
    v: List[np.ndarray] = state["v"]
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t

    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        m[i]   = beta1 * m[i] + (1.0 - beta1) * g
        v[i]   = beta2 * v[i] + (1.0 - beta2) * g * g
        m_hat  = m[i] / c1
        v_hat  = v[i] / c2
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype, copy=False)
    return state


def lr_at_epoch(epoch: int, lr0: float, decay: float = 0.5, every: int = 3) -> float:
    """lr0 · decay^⌊epoch / every⌋."""
    return lr0 * decay ** (epoch // max(1, every))


class Adam:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr     = lr
        self.beta1  = beta1
        self.beta2  = beta2
        self.eps    = eps
        self.state  = init_adam_state(self.params)

    def step(self, scale: float = 1.0) -> None:
        grads = [None if p.grad is None else p.grad * scale for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
