"""Adaptive-moment optimizer"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dusss.app.tensor.tensor import Tensor
from dusss.errors import OptimizerError

logger = logging.getLogger(__name__)


class OptimizerState(BaseModel):
    """Per-parameter moment accumulators plus the update hyper-parameters"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lr: float = Field(default=3e-4, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    step: int = 0
    first_moment: List[np.ndarray] = Field(default_factory=list)
    second_moment: List[np.ndarray] = Field(default_factory=list)


def adam_step(params: Sequence[Tensor], state: OptimizerState, names: Optional[Sequence[str]] = None) -> None:
    """Apply one bias-corrected Adam update to every parameter"""
    missing = [
        (names[i] if names else f"param[{i}] {p.shape}") for i, p in enumerate(params) if p.grad is None
    ]
    if missing:
        raise OptimizerError(f"adam_step: no gradient for {', '.join(missing)}")

    if not state.first_moment:
        state.first_moment = [np.zeros_like(p.data) for p in params]
        state.second_moment = [np.zeros_like(p.data) for p in params]

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for i, p in enumerate(params):
        grad = p.grad
        m = state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * grad
        v = state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * grad * grad
        state.first_moment[i], state.second_moment[i] = m, v
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        p.data = (p.data - update).astype(p.dtype, copy=False)


class Adam:
    """Thin stateful wrapper around `adam_step` for a fixed parameter list"""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        names: Optional[Sequence[str]] = None,
    ):
        self.params = list(params)
        self.names = list(names) if names is not None else None
        self.state = OptimizerState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.state, self.names)
