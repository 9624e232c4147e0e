"""
Central finite-difference oracle for analytic gradients.

Step size is h * max(1, |x|) per element and the error of each entry is
|analytic - numeric| / max(1, |numeric|). Only meaningful in float64.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from dusss.app.tensor.tensor import Tensor


class GradcheckResult(BaseModel):
    """Outcome of comparing analytic and numeric gradients"""

    max_error: float
    checked_entries: int
    passed: bool
    worst_input: Optional[int] = None


def _scalarize(out: Tensor, projection: Optional[np.ndarray]) -> Tensor:
    if out.size == 1:
        return out.reshape(())
    return (out * Tensor(projection)).sum()


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-5,
    seed: int = 0,
    max_entries: Optional[int] = None,
) -> GradcheckResult:
    """
    Compare backward() against central differences for every input with requires_grad.

    Non-scalar outputs are contracted with a fixed random projection so every
    output entry contributes. `max_entries` caps the probed entries per input.
    """
    for i, t in enumerate(inputs):
        if t.requires_grad and t.dtype != np.float64:
            raise ValueError(f"gradcheck: input {i} is {t.dtype}; finite differences need float64")

    rng = np.random.default_rng(seed)
    probe = fn(*inputs)
    projection = None if probe.size == 1 else rng.standard_normal(probe.shape)

    for t in inputs:
        t.zero_grad()
    _scalarize(fn(*inputs), projection).backward()
    analytic = [None if not t.requires_grad else (np.zeros_like(t.data) if t.grad is None else t.grad.copy()) for t in inputs]

    def evaluate() -> float:
        return float(_scalarize(fn(*inputs), projection).data)

    worst, worst_input, checked = 0.0, None, 0
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for idx in indices:
            original = flat[idx]
            step = h * max(1.0, abs(original))
            flat[idx] = original + step
            plus = evaluate()
            flat[idx] = original - step
            minus = evaluate()
            flat[idx] = original
            numeric = (plus - minus) / (2 * step)
            error = abs(analytic[i].reshape(-1)[idx] - numeric) / max(1.0, abs(numeric))
            checked += 1
            if error > worst:
                worst, worst_input = error, i
        t.zero_grad()
    return GradcheckResult(max_error=worst, checked_entries=checked, passed=worst <= tol, worst_input=worst_input)
