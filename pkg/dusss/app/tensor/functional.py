"""
Differentiable operations on `Tensor`.

Each op is a `Function` subclass with a forward rule and its derivative rule;
the lowercase helpers below are the public entry points. `elementwise` and
`reduce` dispatch by op tag.
"""

from __future__ import annotations

from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import builtins

import numpy as np

from dusss.app.tensor.tensor import Function, Tensor, get_default_dtype
from dusss.errors import DomainError, ShapeError

Axis = Optional[Union[int, Tuple[int, ...]]]


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors with the dtype of `like`"""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else get_default_dtype()
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False)


def _pair(a: Any, b: Any) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    return as_tensor(a, like), as_tensor(b, like)


def _check_broadcast(tag: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{tag}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# -- binary elementwise ------------------------------------------------------


class Add(Function):
    tag = "add"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(self.tag, a, b)
        return a + b

    def backward(self, grad: np.ndarray):
        return grad, grad


class Sub(Function):
    tag = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(self.tag, a, b)
        return a - b

    def backward(self, grad: np.ndarray):
        return grad, -grad


class Mul(Function):
    tag = "mul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(self.tag, a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: np.ndarray):
        return grad * self.b, grad * self.a


class Div(Function):
    tag = "div"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(self.tag, a, b)
        if np.any(b == 0):
            raise DomainError(f"div: zero in denominator (numerator {a.shape}, denominator {b.shape})")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad: np.ndarray):
        return grad / self.b, -grad * self.a / (self.b * self.b)


# -- unary elementwise -------------------------------------------------------


class Negate(Function):
    tag = "negate"

    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray):
        return (-grad,)


class Scale(Function):
    tag = "scale"

    def forward(self, a: np.ndarray, factor: float = 1.0) -> np.ndarray:
        self.factor = factor
        return a * np.asarray(factor, dtype=a.dtype)

    def backward(self, grad: np.ndarray):
        return (grad * self.factor,)


class Exp(Function):
    tag = "exp"

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.out = np.exp(a)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out,)


class Log(Function):
    tag = "log"

    def forward(self, a: np.ndarray) -> np.ndarray:
        if np.any(a <= 0):
            raise DomainError(f"log: input of shape {a.shape} has non-positive entries (min={a.min()})")
        self.a = a
        return np.log(a)

    def backward(self, grad: np.ndarray):
        return (grad / self.a,)


class Sqrt(Function):
    tag = "sqrt"

    def forward(self, a: np.ndarray) -> np.ndarray:
        if np.any(a <= 0):
            raise DomainError(f"sqrt: input of shape {a.shape} has non-positive entries (min={a.min()})")
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * 0.5 / self.out,)


class Sigmoid(Function):
    tag = "sigmoid"

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.out = np.exp(-np.logaddexp(0, -a)).astype(a.dtype, copy=False)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out * (1 - self.out),)


class Tanh(Function):
    tag = "tanh"

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * (1 - self.out * self.out),)


class Relu(Function):
    tag = "relu"

    def forward(self, a: np.ndarray) -> np.ndarray:
        self.mask = a > 0
        return np.where(self.mask, a, 0).astype(a.dtype, copy=False)

    def backward(self, grad: np.ndarray):
        return (grad * self.mask,)


class Power(Function):
    tag = "power"

    def forward(self, a: np.ndarray, exponent: float = 2.0) -> np.ndarray:
        self.a, self.exponent = a, exponent
        return a**exponent

    def backward(self, grad: np.ndarray):
        return (grad * self.exponent * self.a ** (self.exponent - 1),)


class Clamp(Function):
    tag = "clamp"

    def forward(self, a: np.ndarray, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
        self.inside = np.ones(a.shape, dtype=bool)
        if lo is not None:
            self.inside &= a >= lo
        if hi is not None:
            self.inside &= a <= hi
        if lo is None and hi is None:
            return a.copy()
        return np.clip(a, lo, hi)

    def backward(self, grad: np.ndarray):
        return (grad * self.inside,)


# -- linear algebra ----------------------------------------------------------


class MatMul(Function):
    tag = "matmul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: inner dimensions disagree for {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad: np.ndarray):
        return grad @ np.swapaxes(self.b, -1, -2), np.swapaxes(self.a, -1, -2) @ grad


# -- reductions --------------------------------------------------------------


def _check_axis(tag: str, a: np.ndarray, axis: Axis) -> None:
    axes = () if axis is None else (axis if isinstance(axis, tuple) else (axis,))
    for ax in axes:
        if not -a.ndim <= ax < a.ndim:
            raise ShapeError(f"{tag}: axis {ax} invalid for tensor of shape {a.shape}")


def _expand(grad: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(grad.reshape((1,) * len(shape)), shape)
    if not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    tag = "sum"

    def forward(self, a: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(self.tag, a, axis)
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        return np.asarray(a.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        return (_expand(grad, self.shape, self.axis, self.keepdims),)


class Mean(Function):
    tag = "mean"

    def forward(self, a: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(self.tag, a, axis)
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        self.count = a.size // builtins.max(np.asarray(a.sum(axis=axis, keepdims=keepdims)).size, 1)
        return np.asarray(a.mean(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        return (_expand(grad, self.shape, self.axis, self.keepdims) / self.count,)


class Max(Function):
    tag = "max"

    def forward(self, a: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(self.tag, a, axis)
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        out = a.max(axis=axis, keepdims=True)
        hits = a == out
        self.route = hits / hits.sum(axis=axis, keepdims=True)
        return np.asarray(out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis)))

    def backward(self, grad: np.ndarray):
        return (_expand(grad, self.shape, self.axis, self.keepdims) * self.route,)


class LogSumExp(Function):
    tag = "logsumexp"

    def forward(self, a: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(self.tag, a, axis)
        self.shape, self.axis, self.keepdims = a.shape, axis, keepdims
        shift = a.max(axis=axis, keepdims=True)
        summed = np.exp(a - shift).sum(axis=axis, keepdims=True)
        out = shift + np.log(summed)
        self.softmax = np.exp(a - out)
        return np.asarray(out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis)))

    def backward(self, grad: np.ndarray):
        return (_expand(grad, self.shape, self.axis, self.keepdims) * self.softmax,)


class L2Norm(Function):
    tag = "l2_norm"

    def forward(self, a: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(self.tag, a, axis)
        self.a, self.shape, self.axis, self.keepdims = a, a.shape, axis, keepdims
        self.norm = np.sqrt((a * a).sum(axis=axis, keepdims=True))
        out = self.norm
        return np.asarray(out if keepdims else (out.reshape(()) if axis is None else np.squeeze(out, axis)))

    def backward(self, grad: np.ndarray):
        # subgradient 0 at the origin
        safe = np.where(self.norm > 0, self.norm, 1)
        direction = np.where(self.norm > 0, self.a / safe, 0)
        return (_expand(grad, self.shape, self.axis, self.keepdims) * direction,)


# -- shape manipulation ------------------------------------------------------


class Reshape(Function):
    tag = "reshape"

    def forward(self, a: np.ndarray, shape: Tuple[int, ...] = ()) -> np.ndarray:
        self.shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    tag = "transpose"

    def forward(self, a: np.ndarray, axes: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        self.axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
        if sorted(self.axes) != list(range(a.ndim)):
            raise ShapeError(f"transpose: axes {self.axes} invalid for shape {a.shape}")
        return np.transpose(a, self.axes)

    def backward(self, grad: np.ndarray):
        return (np.transpose(grad, np.argsort(self.axes)),)


class GetItem(Function):
    tag = "getitem"

    def forward(self, a: np.ndarray, index: Any = None) -> np.ndarray:
        self.shape, self.index = a.shape, index
        return np.asarray(a[index])

    def backward(self, grad: np.ndarray):
        full = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    tag = "concat"

    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        self.axis = axis
        self.sizes = [arr.shape[axis] for arr in arrays]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError:
            raise ShapeError(f"concat: shapes {[a.shape for a in arrays]} disagree off axis {axis}") from None

    def backward(self, grad: np.ndarray):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Embedding(Function):
    tag = "embedding"

    def forward(self, weight: np.ndarray, ids: Optional[np.ndarray] = None) -> np.ndarray:
        self.shape, self.ids = weight.shape, np.asarray(ids, dtype=np.int64)
        if self.ids.size and (self.ids.min() < 0 or self.ids.max() >= weight.shape[0]):
            raise DomainError(f"embedding: ids outside [0, {weight.shape[0]}) in batch of shape {self.ids.shape}")
        return weight[self.ids]

    def backward(self, grad: np.ndarray):
        full = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(full, self.ids, grad)
        return (full,)


# -- spatial ops (N, C, H, W layout) -----------------------------------------


class Conv2d(Function):
    tag = "conv2d"

    def forward(self, x: np.ndarray, w: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
        if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {w.shape}")
        n, c, h, wd = x.shape
        out_c, _, kh, kw = w.shape
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        ho = (xp.shape[2] - kh) // stride + 1
        wo = (xp.shape[3] - kw) // stride + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
        windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        windows = windows[:, :, ::stride, ::stride][:, :, :ho, :wo]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
        self.cols, self.w = cols, w
        self.geometry = (n, c, h, wd, kh, kw, ho, wo, stride, padding, xp.shape)
        out = cols @ w.reshape(out_c, -1).T
        return out.reshape(n, ho, wo, out_c).transpose(0, 3, 1, 2)

    def backward(self, grad: np.ndarray):
        n, c, h, wd, kh, kw, ho, wo, stride, padding, padded = self.geometry
        out_c = self.w.shape[0]
        g2 = grad.transpose(0, 2, 3, 1).reshape(-1, out_c)
        dw = (g2.T @ self.cols).reshape(self.w.shape)
        dcols = (g2 @ self.w.reshape(out_c, -1)).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros(padded, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        dx = dxp[:, :, padding : padding + h, padding : padding + wd] if padding else dxp
        return dx, dw


class AvgPool2d(Function):
    tag = "avg_pool2d"

    def forward(self, x: np.ndarray, kernel: int = 2) -> np.ndarray:
        n, c, h, w = x.shape
        if h % kernel or w % kernel:
            raise ShapeError(f"avg_pool2d: spatial shape {(h, w)} not divisible by {kernel}")
        self.kernel = kernel
        return x.reshape(n, c, h // kernel, kernel, w // kernel, kernel).mean(axis=(3, 5))

    def backward(self, grad: np.ndarray):
        k = self.kernel
        return (np.repeat(np.repeat(grad, k, axis=2), k, axis=3) / (k * k),)


def bilinear_matrix(size: int, dtype: np.dtype) -> np.ndarray:
    """(2*size, size) interpolation matrix, half-pixel centres, edges clamped"""
    out = np.zeros((2 * size, size), dtype=dtype)
    for i in range(2 * size):
        src = min(builtins.max((i + 0.5) / 2.0 - 0.5, 0.0), size - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, size - 1)
        frac = src - lo
        out[i, lo] += 1.0 - frac
        out[i, hi] += frac
    return out


class UpsampleBilinear2x(Function):
    tag = "upsample_bilinear2x"

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4:
            raise ShapeError(f"upsample_bilinear2x: expected (N, C, H, W), got {x.shape}")
        self.uh = bilinear_matrix(x.shape[2], x.dtype)
        self.uw = bilinear_matrix(x.shape[3], x.dtype)
        return np.einsum("ah,nchw,bw->ncab", self.uh, x, self.uw, optimize=True)

    def backward(self, grad: np.ndarray):
        return (np.einsum("ah,ncab,bw->nchw", self.uh, grad, self.uw, optimize=True),)


# -- public helpers ----------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(*_pair(a, b))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(*_pair(a, b))


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(*_pair(a, b))


def div(a: Any, b: Any) -> Tensor:
    return Div.apply(*_pair(a, b))


def negate(a: Tensor) -> Tensor:
    return Negate.apply(a)


def scale(a: Tensor, factor: float) -> Tensor:
    return Scale.apply(a, factor=factor)


def exp(a: Tensor) -> Tensor:
    return Exp.apply(a)


def log(a: Tensor) -> Tensor:
    return Log.apply(a)


def sqrt(a: Tensor) -> Tensor:
    return Sqrt.apply(a)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


def tanh(a: Tensor) -> Tensor:
    return Tanh.apply(a)


def relu(a: Tensor) -> Tensor:
    return Relu.apply(a)


def power(a: Tensor, exponent: float) -> Tensor:
    return Power.apply(a, exponent=exponent)


def clamp(a: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    return Clamp.apply(a, lo=lo, hi=hi)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(a, axis=axis, keepdims=keepdims)


def max(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Max.apply(a, axis=axis, keepdims=keepdims)


def logsumexp(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    return LogSumExp.apply(a, axis=axis, keepdims=keepdims)


def l2_norm(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    return L2Norm.apply(a, axis=axis, keepdims=keepdims)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(a, shape=tuple(shape))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(a, axes=None if axes is None else tuple(axes))


def getitem(a: Tensor, index: Any) -> Tensor:
    return GetItem.apply(a, index=index)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    return Embedding.apply(weight, ids=ids)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    out = Conv2d.apply(x, weight, stride=stride, padding=padding)
    if bias is not None:
        out = out + reshape(bias, (1, -1, 1, 1))
    return out


def avg_pool2d(x: Tensor, kernel: int = 2) -> Tensor:
    return AvgPool2d.apply(x, kernel=kernel)


def upsample_bilinear2x(x: Tensor) -> Tensor:
    return UpsampleBilinear2x.apply(x)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    return exp(a - logsumexp(a, axis=axis, keepdims=True))


def normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """L2-normalize along `axis` with a norm floor"""
    return a / clamp(l2_norm(a, axis=axis, keepdims=True), lo=eps)


ELEMENTWISE: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "sigmoid": sigmoid,
    "negate": negate,
    "scale": scale,
    "tanh": tanh,
    "relu": relu,
}

REDUCTIONS: Dict[str, Callable[..., Tensor]] = {
    "sum": sum,
    "mean": mean,
    "l2_norm": l2_norm,
    "logsumexp": logsumexp,
    "max": max,
}

_BINARY = {"add", "sub", "mul", "div"}


def elementwise(op: str, a: Any, b: Any = None) -> Tensor:
    """Dispatch an elementwise op by tag; `b` is the second operand or the scale factor"""
    if op not in ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(ELEMENTWISE)}")
    if op in _BINARY:
        if b is None:
            raise ShapeError(f"{op}: needs two operands")
        return ELEMENTWISE[op](a, b)
    if op == "scale":
        return scale(a, float(b))
    return ELEMENTWISE[op](a)


def reduce(op: str, a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    if op not in REDUCTIONS:
        raise ValueError(f"unknown reduction {op!r}; expected one of {sorted(REDUCTIONS)}")
    return REDUCTIONS[op](a, axis=axis, keepdims=keepdims)
