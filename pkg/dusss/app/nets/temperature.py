from __future__ import annotations

import math

import numpy as np

from dusss.app.nets.layers import Module, Parameter
from dusss.app.tensor import Tensor, functional as F

TAU_MIN = 0.01
TAU_MAX = 100.0


class Temperature(Module):
    """Learnable tau shared by every InfoNCE term; stored as log(tau) and clamped to [0.01, 100]"""

    def __init__(self, init: float = 0.07):
        if not TAU_MIN <= init <= TAU_MAX:
            raise ValueError(f"temperature {init} outside [{TAU_MIN}, {TAU_MAX}]")
        self.log_tau = Parameter(np.array(math.log(init)))

    def forward(self) -> Tensor:
        return F.exp(F.clamp(self.log_tau, lo=math.log(TAU_MIN), hi=math.log(TAU_MAX)))

    @property
    def value(self) -> float:
        return float(np.clip(np.exp(self.log_tau.data), TAU_MIN, TAU_MAX))
