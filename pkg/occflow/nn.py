"""
occflow/nn.py
Parameter containers and the small set of layers the network is built from.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from occflow.errors import ContractError, DimensionError
from occflow.tensor import Tensor, conv2d, get_default_dtype, layer_norm


class Parameter(Tensor):
    """A leaf tensor that always requires grad."""

    def __init__(self, data: np.ndarray, name: str = ""):
        super().__init__(np.array(data, dtype=get_default_dtype()), requires_grad=True)
        self.name = name


# ═══════════════════════════════════════════════════════════════
# MODULE BASE
# ═══════════════════════════════════════════════════════════════

class Module:
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    # ───────── TRAVERSAL ─────────

    def _children(self) -> Iterator[Tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        """Dotted names in registration order; a shared parameter is listed once."""
        out: List[Tuple[str, Parameter]] = []
        seen: set = set()
        self._collect(prefix, out, seen)
        return out

    def _collect(self, prefix: str, out: list, seen: set) -> None:
        for key, value in self._children():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                if id(value) not in seen:
                    seen.add(id(value))
                    value.name = value.name or path
                    out.append((path, value))
            else:
                value._collect(f"{path}.", out, seen)

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    # ───────── MODE / GRADS ─────────

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    # ───────── STATE ─────────

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        own     = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra   = sorted(set(state) - set(own))
        if missing or extra:
            raise ContractError(f"state mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: stored shape {arr.shape} != parameter shape {p.shape}")
        for name, p in own.items():
            p.data = np.array(state[name], dtype=p.data.dtype)
            p.grad = None


class ModuleList(Module):
    def __init__(self, modules: Sequence[Module] = ()):
        self._items: List[Module] = list(modules)

    def _children(self):
        for i, m in enumerate(self._items):
            yield str(i), m

    def __getitem__(self, i: int) -> Module:
        return self._items[i]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def append(self, module: Module) -> None:
        self._items.append(module)


# ═══════════════════════════════════════════════════════════════
# LAYERS
# ═══════════════════════════════════════════════════════════════

class Linear(Module):
    """y = x·W + b, W uniform in ±1/√fan_in, b zero."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound       = 1.0 / np.sqrt(d_in)
        self.d_in   = d_in
        self.d_out  = d_out
        self.weight = Parameter(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.bias   = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear expects last extent {self.d_in}, got shape {x.shape}")
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y

    def zero_init(self) -> None:
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.eps   = eps
        self.gamma = Parameter(np.ones(dim))
        self.beta  = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, axis=-1, eps=self.eps) * self.gamma + self.beta


class Conv2d(Module):
    """Channels-last convolution; kernel stored as (kh, kw, Cin, Cout)."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
    ):
        bound        = 1.0 / np.sqrt(kernel * kernel * c_in)
        self.c_in    = c_in
        self.c_out   = c_out
        self.stride  = stride
        self.padding = padding
        self.weight  = Parameter(rng.uniform(-bound, bound, size=(kernel, kernel, c_in, c_out)))
        self.bias    = Parameter(np.zeros(c_out))

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, stride=self.stride, padding=self.padding) + self.bias


class Dropout(Module):
    """Inverted dropout; identity in eval mode or when p == 0."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ContractError(f"dropout probability must be in [0, 1), got {p}")
        self.p   = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * keep


class Mlp(Module):
    """Linear → GELU → Dropout → Linear → Dropout, hidden width ratio × dim."""

    def __init__(
        self,
        dim: int,
        rng: np.random.Generator,
        ratio: int = 4,
        out_dim: Optional[int] = None,
        dropout: float = 0.0,
    ):
        self.fc1  = Linear(dim, ratio * dim, rng)
        self.fc2  = Linear(ratio * dim, out_dim or dim, rng)
        self.drop = Dropout(dropout, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(self.fc2(self.drop(self.fc1(x).gelu())))


def count_parameters(module: Module) -> int:
    return int(sum(p.size for p in module.parameters()))


def parameter_breakdown(module: Module, depth: int = 1) -> Dict[str, int]:
    """Parameter counts grouped by the first `depth` components of each dotted name."""
    out: Dict[str, int] = {}
    for name, p in module.named_parameters():
        key      = ".".join(name.split(".")[:depth])
        out[key] = out.get(key, 0) + p.size
    return out
