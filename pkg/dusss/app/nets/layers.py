"""
Module/Parameter base classes and the basic layers everything else is built from.
"""

from __future__ import annotations

import copy
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from dusss.app.tensor import Tensor, functional as F, get_default_dtype
from dusss.errors import CheckpointError


class Parameter(Tensor):
    """Leaf tensor that is optimized"""

    def __init__(self, data: np.ndarray, name: Optional[str] = None):
        super().__init__(np.asarray(data, dtype=get_default_dtype()), requires_grad=True, name=name)


def uniform_fan_in(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Parameter container; attributes that are Parameters or Modules are tracked in definition order"""

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__}.forward")

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield f"{name}.{i}", child

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield f"{prefix}{name}", value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix=f"{prefix}{name}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))
            if missing or unexpected:
                raise CheckpointError(f"state mismatch; missing={missing} unexpected={unexpected}")
        for name, p in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise CheckpointError(f"{name}: checkpoint shape {value.shape} vs parameter {p.shape}")
            p.data = value.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def clone(self) -> "Module":
        """Independent copy with identical architecture and values"""
        twin = copy.deepcopy(self)
        twin.zero_grad()
        return twin


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Parameter(uniform_fan_in(rng, (in_features, out_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
    ):
        fan_in = in_channels * kernel * kernel
        self.weight = Parameter(uniform_fan_in(rng, (out_channels, in_channels, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(out_channels)) if bias else None
        self.stride, self.padding = stride, padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def identity_(self) -> "Conv2d":
        """Centre-tap identity kernel (square, odd-sized, in == out channels)"""
        out_c, in_c, k, _ = self.weight.shape
        kernel = np.zeros(self.weight.shape, dtype=self.weight.dtype)
        for c in range(min(out_c, in_c)):
            kernel[c, c, k // 2, k // 2] = 1.0
        self.weight.data = kernel
        if self.bias is not None:
            self.bias.data = np.zeros_like(self.bias.data)
        return self
