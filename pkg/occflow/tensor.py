"""
occflow/tensor.py
Dense numpy-backed tensors with reverse-mode differentiation and a
finite-difference gradient oracle.

Layout is row-major, images are channels-last (B, H, W, C).
"""

from __future__ import annotations

import contextlib
import threading
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf, expit

from occflow.errors import ContractError, DimensionError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]


# ═══════════════════════════════════════════════════════════════
# GLOBAL STATE
# ═══════════════════════════════════════════════════════════════

_local = threading.local()
_default_dtype = np.float64


def _checked_dtype(dtype: Any) -> Any:
    dtype = np.dtype(dtype).type
    if dtype not in (np.float64, np.float32):
        raise ContractError(f"unsupported dtype {dtype!r}; use float64 or float32")
    return dtype


def set_default_dtype(dtype: Any) -> None:
    """Process-wide default; a `default_dtype` block in the current thread takes precedence."""
    global _default_dtype
    _default_dtype = _checked_dtype(dtype)


def get_default_dtype() -> Any:
    return getattr(_local, "dtype", None) or _default_dtype


@contextlib.contextmanager
def default_dtype(dtype: Any):
    """New tensors and parameters in this thread use `dtype` inside the block."""
    previous = getattr(_local, "dtype", None)
    _local.dtype = _checked_dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


def grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (evaluation, finite differences)."""
    previous = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


# ═══════════════════════════════════════════════════════════════
# FUNCTION BASE
# ═══════════════════════════════════════════════════════════════

class Function:
    """
    One differentiable operation. `forward` sees numpy arrays, `backward`
    receives dL/d(output) and returns dL/d(input) per input (None = no grad).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: ArrayLike, **kwargs: Any) -> "Tensor":
        tensors = tuple(as_tensor(x) for x in inputs)
        fn      = cls(*tensors)
        out     = fn.forward(*(t.data for t in tensors), **kwargs)
        track   = grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=track, creator=fn if track else None)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a} and {b}") from None


def _normalize_axis(axis: Any, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out  = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise DimensionError(f"axis {a} out of range for rank {ndim}")
        out.append(a % ndim)
    return tuple(sorted(out))


# ═══════════════════════════════════════════════════════════════
# TENSOR
# ═══════════════════════════════════════════════════════════════

class Tensor:
    __array_ufunc__ = None

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        creator: Optional[Function] = None,
    ):
        arr = np.asarray(data.data if isinstance(data, Tensor) else data)
        dtype = get_default_dtype()
        if arr.dtype != dtype and not (
            creator is not None and arr.dtype in (np.float32, np.float64)
        ):
            arr = arr.astype(dtype)
        self.data: np.ndarray          = arr
        self.requires_grad: bool       = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator                   = creator
        self._consumed                 = False

    # ───────── BASICS ─────────

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single value, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # ───────── ARITHMETIC ─────────

    def __add__(self, other: ArrayLike) -> "Tensor":      return Add.apply(self, other)
    def __radd__(self, other: ArrayLike) -> "Tensor":     return Add.apply(other, self)
    def __sub__(self, other: ArrayLike) -> "Tensor":      return Sub.apply(self, other)
    def __rsub__(self, other: ArrayLike) -> "Tensor":     return Sub.apply(other, self)
    def __mul__(self, other: ArrayLike) -> "Tensor":      return Mul.apply(self, other)
    def __rmul__(self, other: ArrayLike) -> "Tensor":     return Mul.apply(other, self)
    def __truediv__(self, other: ArrayLike) -> "Tensor":  return Div.apply(self, other)
    def __rtruediv__(self, other: ArrayLike) -> "Tensor": return Div.apply(other, self)
    def __neg__(self) -> "Tensor":                        return Neg.apply(self)
    def __matmul__(self, other: ArrayLike) -> "Tensor":   return MatMul.apply(self, other)
    def __rmatmul__(self, other: ArrayLike) -> "Tensor":  return MatMul.apply(other, self)

    def __pow__(self, exponent: float) -> "Tensor":
        return PowScalar.apply(self, exponent=float(exponent))

    def __getitem__(self, index: Any) -> "Tensor":
        return GetItem.apply(self, index=index)

    # ───────── REDUCTIONS / SHAPE ─────────

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def max(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return Max.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=axes or tuple(reversed(range(self.ndim))))

    # ───────── ELEMENT-WISE ─────────

    def exp(self) -> "Tensor":      return Exp.apply(self)
    def log(self) -> "Tensor":      return Log.apply(self)
    def abs(self) -> "Tensor":      return Abs.apply(self)
    def tanh(self) -> "Tensor":     return Tanh.apply(self)
    def sigmoid(self) -> "Tensor":  return Sigmoid.apply(self)
    def gelu(self) -> "Tensor":     return GELU.apply(self)
    def elu(self) -> "Tensor":      return ELU.apply(self)
    def softplus(self) -> "Tensor": return Softplus.apply(self)

    def clip(self, low: float, high: float) -> "Tensor":
        return Clip.apply(self, low=low, high=high)

    def softmax(self, axis: int = -1) -> "Tensor":
        return Softmax.apply(self, axis=axis)

    # ───────── BACKWARD ─────────

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if self._consumed:
            raise ContractError("graph already consumed; run a fresh forward pass")
        if grad is None:
            if self.data.size != 1:
                raise ContractError(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            raise ContractError("loss does not depend on any tensor that requires grad")

        order = _topological_order(self)
        grads: Dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}

        for node in reversed(order):
            g  = grads.pop(id(node), None)
            fn = node.creator
            if fn is None:
                if g is not None:
                    node.grad = np.array(g) if node.grad is None else node.grad + g
                continue
            node.creator   = None
            node._consumed = True
            if g is None:
                continue
            for inp, ig in zip(fn.inputs, fn.backward(g)):
                if ig is None or not inp.requires_grad:
                    continue
                key        = id(inp)
                grads[key] = ig if key not in grads else grads[key] + ig


def _topological_order(root: Tensor) -> List[Tensor]:
    """Inputs before outputs; iterative so deep graphs do not hit the recursion limit."""
    order: List[Tensor] = []
    seen: set = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for inp in node.creator.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
    return order


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def as_array(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


# ═══════════════════════════════════════════════════════════════
# ARITHMETIC
# ═══════════════════════════════════════════════════════════════

class Add(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, "add")
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, "sub")
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, "mul")
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.b, self.a.shape),
            _unbroadcast(grad * self.a, self.b.shape),
        )


class Div(Function):
    def forward(self, a, b):
        _broadcast_shape(a.shape, b.shape, "div")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return (
            _unbroadcast(grad / self.b, self.a.shape),
            _unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape),
        )


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class PowScalar(Function):
    def forward(self, x, exponent=2.0):
        self.x, self.p = x, exponent
        return np.power(x, exponent)

    def backward(self, grad):
        p = self.p
        if p == 0.0:
            return (np.zeros_like(self.x),)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = p * np.power(self.x, p - 1.0)
        if p < 1.0:
            local = np.where(self.x == 0, 0.0, local)
        return (grad * local,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        _broadcast_shape(a.shape[:-2], b.shape[:-2], "matmul")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return _unbroadcast(ga, self.a.shape), _unbroadcast(gb, self.b.shape)


# ═══════════════════════════════════════════════════════════════
# REDUCTIONS
# ═══════════════════════════════════════════════════════════════

class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape    = x.shape
        self.axis     = _normalize_axis(axis, x.ndim)
        self.keepdims = keepdims
        return np.asarray(x.sum(axis=self.axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape    = x.shape
        self.axis     = _normalize_axis(axis, x.ndim)
        self.keepdims = keepdims
        axes          = self.axis if self.axis is not None else tuple(range(x.ndim))
        self.count    = int(np.prod([x.shape[a] for a in axes])) if axes else 1
        return np.asarray(x.mean(axis=self.axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape),)


class Max(Function):
    """Ties share the gradient equally."""

    def forward(self, x, axis=None, keepdims=False):
        self.axis     = _normalize_axis(axis, x.ndim)
        self.keepdims = keepdims
        top           = x.max(axis=self.axis, keepdims=True)
        mask          = (x == top).astype(x.dtype)
        self.route    = mask / mask.sum(axis=self.axis, keepdims=True)
        return np.asarray(top if keepdims else np.squeeze(top, axis=self.axis))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (self.route * grad,)


# ═══════════════════════════════════════════════════════════════
# SHAPE / INDEXING
# ═══════════════════════════════════════════════════════════════

class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, axes=()):
        if sorted(axes) != list(range(x.ndim)):
            raise DimensionError(f"transpose: axes {axes} do not permute rank {x.ndim}")
        self.inverse = tuple(np.argsort(axes))
        return x.transpose(axes)

    def backward(self, grad):
        return (grad.transpose(self.inverse),)


class GetItem(Function):
    def forward(self, x, index=None):
        self.shape, self.index = x.shape, index
        return np.asarray(x[index])

    def backward(self, grad):
        out   = np.zeros(self.shape, dtype=grad.dtype)
        parts = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(p is Ellipsis or p is None or isinstance(p, (int, np.integer, slice)) for p in parts):
            out[self.index] += grad
        else:
            np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        self.axis  = axis
        self.sizes = [a.shape[axis] for a in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError:
            raise DimensionError(f"concat: shapes {[a.shape for a in arrays]} on axis {axis}") from None

    def backward(self, grad):
        cuts = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, cuts, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays, axis=0):
        self.axis = axis
        try:
            return np.stack(arrays, axis=axis)
        except ValueError:
            raise DimensionError(f"stack: shapes {[a.shape for a in arrays]}") from None

    def backward(self, grad):
        return tuple(np.moveaxis(grad, self.axis, 0))


class Roll(Function):
    def forward(self, x, shift=(), axis=()):
        self.shift, self.axis = tuple(shift), tuple(axis)
        return np.roll(x, self.shift, axis=self.axis)

    def backward(self, grad):
        return (np.roll(grad, tuple(-s for s in self.shift), axis=self.axis),)


class BroadcastTo(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        try:
            return np.broadcast_to(x, shape)
        except ValueError:
            raise DimensionError(f"broadcast_to: {x.shape} → {tuple(shape)}") from None

    def backward(self, grad):
        return (_unbroadcast(grad, self.shape),)


class UpsampleNearest(Function):
    """×factor nearest-neighbour resize of (B, H, W, C) along H and W."""

    def forward(self, x, factor=2):
        self.factor = factor
        return x.repeat(factor, axis=1).repeat(factor, axis=2)

    def backward(self, grad):
        b, h, w, c = grad.shape
        f = self.factor
        return (grad.reshape(b, h // f, f, w // f, f, c).sum(axis=(2, 4)),)


# ═══════════════════════════════════════════════════════════════
# ELEMENT-WISE NON-LINEARITIES
# ═══════════════════════════════════════════════════════════════

class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Abs(Function):
    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign,)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class GELU(Function):
    """Exact form x·Φ(x)."""

    def forward(self, x):
        self.x   = x
        self.cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
        return x * self.cdf

    def backward(self, grad):
        pdf = np.exp(-0.5 * self.x * self.x) / np.sqrt(2.0 * np.pi)
        return (grad * (self.cdf + self.x * pdf),)


class ELU(Function):
    def forward(self, x, alpha=1.0):
        self.x, self.alpha = x, alpha
        return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))

    def backward(self, grad):
        local = np.where(self.x > 0, 1.0, self.alpha * np.exp(np.minimum(self.x, 0.0)))
        return (grad * local,)


class Softplus(Function):
    def forward(self, x):
        self.x = x
        return np.logaddexp(0.0, x)

    def backward(self, grad):
        return (grad * expit(self.x),)


class Clip(Function):
    def forward(self, x, low=0.0, high=1.0):
        self.inside = (x > low) & (x < high)
        return np.clip(x, low, high)

    def backward(self, grad):
        return (grad * self.inside,)


class Softmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted   = x - x.max(axis=axis, keepdims=True)
        e         = np.exp(shifted)
        self.out  = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class BCEWithLogits(Function):
    """Element-wise max(z,0) − z·t + log(1 + e^{−|z|}); targets receive no gradient."""

    def forward(self, z, t):
        _broadcast_shape(z.shape, t.shape, "bce")
        self.z, self.t = z, t
        return np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))

    def backward(self, grad):
        return _unbroadcast(grad * (expit(self.z) - self.t), self.z.shape), None


class LayerNormFn(Function):
    def forward(self, x, axis=-1, eps=1e-5):
        if eps <= 0:
            raise ContractError(f"layer_norm eps must be positive, got {eps}")
        self.axis = axis
        mu        = x.mean(axis=axis, keepdims=True)
        centered  = x - mu
        var       = (centered * centered).mean(axis=axis, keepdims=True)
        self.inv  = 1.0 / np.sqrt(var + eps)
        self.xhat = centered * self.inv
        self.n    = x.shape[axis]
        return self.xhat

    def backward(self, grad):
        a, n, xhat = self.axis, self.n, self.xhat
        gsum  = grad.sum(axis=a, keepdims=True)
        gxsum = (grad * xhat).sum(axis=a, keepdims=True)
        return (self.inv / n * (n * grad - gsum - xhat * gxsum),)


# ═══════════════════════════════════════════════════════════════
# CONVOLUTION
# ═══════════════════════════════════════════════════════════════

class Conv2dFn(Function):
    """Cross-correlation of x (B,H,W,Cin) with kernel (kh,kw,Cin,Cout)."""

    def forward(self, x, kernel, stride=1, padding=0):
        if x.ndim != 4 or kernel.ndim != 4:
            raise DimensionError(f"conv2d: expected (B,H,W,C) and (kh,kw,Cin,Cout), got {x.shape} and {kernel.shape}")
        kh, kw, cin, _ = kernel.shape
        if x.shape[3] != cin:
            raise DimensionError(f"conv2d: input has {x.shape[3]} channels, kernel expects {cin}")
        p = padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        if kh > xp.shape[1] or kw > xp.shape[2]:
            raise DimensionError(f"conv2d: kernel {kh}×{kw} larger than padded input {xp.shape[1]}×{xp.shape[2]}")
        windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.padded_shape = xp.shape
        self.windows      = windows
        # windows: (B, Ho, Wo, Cin, kh, kw)
        return np.tensordot(windows, kernel.transpose(2, 0, 1, 3), axes=([3, 4, 5], [0, 1, 2]))

    def backward(self, grad):
        kernel, s, p = self.kernel, self.stride, self.padding
        kh, kw, _, _ = kernel.shape
        _, ho, wo, _ = grad.shape

        gk = np.tensordot(self.windows, grad, axes=([0, 1, 2], [0, 1, 2]))
        gk = gk.transpose(1, 2, 0, 3)

        gxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s, :] += grad @ kernel[i, j].T
        gx = gxp[:, p:gxp.shape[1] - p, p:gxp.shape[2] - p, :] if p else gxp
        return gx, gk


# ═══════════════════════════════════════════════════════════════
# FUNCTIONAL API
# ═══════════════════════════════════════════════════════════════

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    return MatMul.apply(a, b)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def conv2d(x: ArrayLike, kernel: ArrayLike, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv2dFn.apply(x, kernel, stride=stride, padding=padding)


def layer_norm(x: ArrayLike, axis: int = -1, eps: float = 1e-5) -> Tensor:
    """Normalise to zero mean and unit variance along `axis`; no affine part."""
    return LayerNormFn.apply(x, axis=axis, eps=eps)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    return Stack.apply(*tensors, axis=axis)


def roll(x: ArrayLike, shift: Sequence[int], axis: Sequence[int]) -> Tensor:
    return Roll.apply(x, shift=tuple(shift), axis=tuple(axis))


def broadcast_to(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(x, shape=tuple(shape))


def upsample_nearest(x: ArrayLike, factor: int = 2) -> Tensor:
    return UpsampleNearest.apply(x, factor=factor)


def bce_with_logits(logits: ArrayLike, targets: ArrayLike) -> Tensor:
    return BCEWithLogits.apply(logits, targets)


_ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "tanh":    lambda x: Tanh.apply(x),
    "sigmoid": lambda x: Sigmoid.apply(x),
    "gelu":    lambda x: GELU.apply(x),
    "elu":     lambda x: ELU.apply(x),
    "add":     lambda a, b: Add.apply(a, b),
    "mul":     lambda a, b: Mul.apply(a, b),
    "sub":     lambda a, b: Sub.apply(a, b),
}


def elementwise(op: str, *args: ArrayLike) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown element-wise op {op!r}; choose from {sorted(_ELEMENTWISE)}") from None
    return fn(*args)


# ═══════════════════════════════════════════════════════════════
# FINITE-DIFFERENCE ORACLE
# ═══════════════════════════════════════════════════════════════

def central_differences(f: Callable[[Tensor], Tensor], x: ArrayLike, h: float = 1e-5) -> np.ndarray:
    work    = np.array(as_array(x), dtype=np.float64)
    numeric = np.zeros_like(work)
    with no_grad():
        for idx in np.ndindex(work.shape):
            orig      = work[idx]
            work[idx] = orig + h
            f_plus    = f(Tensor(work)).item()
            work[idx] = orig - h
            f_minus   = f(Tensor(work)).item()
            work[idx] = orig
            numeric[idx] = (f_plus - f_minus) / (2.0 * h)
    return numeric


def finite_difference_check(
    f: Callable[[Tensor], Tensor],
    x: ArrayLike,
    h: float = 1e-5,
    *,
    floor: float = 1e-8,
) -> float:
    """
    Max over coordinates of |analytic − central difference| / (|central difference| + floor).
    `f` must map a tensor to a scalar tensor and build a fresh graph per call.
    """
    base  = np.array(as_array(x), dtype=np.float64)
    leaf  = Tensor(base.copy(), requires_grad=True)
    out   = f(leaf)
    if out.size != 1:
        raise ContractError(f"finite_difference_check needs a scalar function, got shape {out.shape}")
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)
    if base.size == 0:
        return 0.0
    numeric = central_differences(f, base, h)
    return float(np.max(np.abs(analytic - numeric) / (np.abs(numeric) + floor)))


def parameter_gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    *,
    floor: float = 1e-8,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Same error measure as `finite_difference_check`, taken over the entries of
    several parameter tensors perturbed in place. With `max_coords`, a seeded
    subset of the entries is checked.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    coords = [(i, idx) for i, p in enumerate(params) for idx in np.ndindex(p.shape)]
    if max_coords is not None and len(coords) > max_coords:
        rng    = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(picked)]

    worst = 0.0
    with no_grad():
        for i, idx in coords:
            data        = params[i].data
            orig        = data[idx]
            data[idx]   = orig + h
            f_plus      = loss_fn().item()
            data[idx]   = orig - h
            f_minus     = loss_fn().item()
            data[idx]   = orig
            numeric     = (f_plus - f_minus) / (2.0 * h)
            err         = abs(analytic[i][idx] - numeric) / (abs(numeric) + floor)
            worst       = max(worst, float(err))
    for p in params:
        p.grad = None
    return worst
