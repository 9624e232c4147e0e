"""
Dense tensor with reverse-mode automatic differentiation.

A `Tensor` wraps a NumPy array. Operations are `Function` subclasses that record
themselves on the output tensor, so the executed graph can be walked backwards
from a scalar loss.
"""

from __future__ import annotations

import contextlib
import logging
from typing import Any, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from dusss.errors import GraphError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_DEFAULT_DTYPE: np.dtype = np.dtype(np.float64)
_GRAD_ENABLED: bool = True


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype: Union[str, np.dtype, type]) -> None:
    """Select float32 (training) or float64 (verification) for new tensors"""
    global _DEFAULT_DTYPE
    resolved = np.dtype(dtype)
    if resolved not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported tensor dtype {resolved}; use float32 or float64")
    _DEFAULT_DTYPE = resolved


@contextlib.contextmanager
def precision(dtype: Union[str, np.dtype, type]) -> Iterator[None]:
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward passes without recording a graph"""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Function:
    """
    Base class for differentiable operations.

    `forward` receives the raw arrays of the input tensors and returns the output
    array; `backward` receives dL/d(output) and returns one gradient array (or None)
    per input tensor. Anything the derivative rule needs is saved on `self`.
    """

    tag: str = "op"

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"forward pass not implemented for {type(self).__name__}")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"backward pass not implemented for {type(self).__name__}")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _GRAD_ENABLED and any(t.requires_grad for t in tensors)
        return Tensor(
            out_data,
            requires_grad=requires_grad,
            _ctx=func if requires_grad else None,
        )

    @staticmethod
    def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so that `grad` matches `to_shape`"""
        if grad.shape == to_shape:
            return grad
        while grad.ndim > len(to_shape):
            grad = grad.sum(axis=0)
        for dim, size in enumerate(to_shape):
            if size == 1 and grad.shape[dim] != 1:
                grad = grad.sum(axis=dim, keepdims=True)
        return grad.reshape(to_shape)


class Tensor:
    """N-dimensional float array that participates in reverse-mode differentiation"""

    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[Union[str, np.dtype, type]] = None,
        name: Optional[str] = None,
        _ctx: Optional[Function] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None and isinstance(data, np.ndarray) and data.dtype.kind == "f":
            self.data = data
        else:
            self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._ctx = _ctx
        self._released = False
        self._backward_done = False

    # -- introspection -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- autograd ------------------------------------------------------------

    def _topological_order(self) -> list["Tensor"]:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.tensors:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Populate `.grad` of every tensor reachable from this scalar loss"""
        if not self.requires_grad:
            raise GraphError(
                f"backward() on a tensor that does not require grad (detached graph, shape={self.shape})"
            )
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar loss, got shape {self.shape}")
        if self._backward_done or self._released:
            raise GraphError("backward() called twice on the same graph; rebuild the forward pass first")

        order = self._topological_order()
        for node in order:
            if node._released:
                raise GraphError("loss depends on a graph that was already released by an earlier backward()")

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            node.grad = grad if node.grad is None or not node.is_leaf else node.grad + grad
            if node._ctx is None:
                continue
            input_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.tensors, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                parent_grad = Function.unbroadcast(np.asarray(parent_grad, dtype=parent.dtype), parent.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

        for node in order:
            if node._ctx is not None:
                node._ctx = None
                node._released = True
        self._backward_done = True

    # -- operators -----------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        return F.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return F.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return F.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return F.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return F.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return F.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return F.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return F.div(other, self)

    def __neg__(self) -> "Tensor":
        return F.negate(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return F.power(self, exponent)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return F.getitem(self, index)

    # -- method forms of functional ops --------------------------------------

    def exp(self) -> "Tensor":
        return F.exp(self)

    def log(self) -> "Tensor":
        return F.log(self)

    def sqrt(self) -> "Tensor":
        return F.sqrt(self)

    def sigmoid(self) -> "Tensor":
        return F.sigmoid(self)

    def tanh(self) -> "Tensor":
        return F.tanh(self)

    def relu(self) -> "Tensor":
        return F.relu(self)

    def clamp(self, lo: Optional[float] = None, hi: Optional[float] = None) -> "Tensor":
        return F.clamp(self, lo, hi)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return F.mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return F.max(self, axis=axis, keepdims=keepdims)

    def logsumexp(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return F.logsumexp(self, axis=axis, keepdims=keepdims)

    def l2_norm(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return F.l2_norm(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return F.transpose(self, axes or None)

    @property
    def T(self) -> "Tensor":
        return F.transpose(self, None)


from dusss.app.tensor import functional as F  # noqa: E402  (ops need Tensor defined)
