from . import functional
from .gradcheck import GradcheckResult, gradcheck
from .optim import Adam, OptimizerState, adam_step
from .tensor import Function, Tensor, get_default_dtype, is_grad_enabled, no_grad, precision, set_default_dtype

__all__ = [
    "Adam",
    "Function",
    "GradcheckResult",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "functional",
    "get_default_dtype",
    "gradcheck",
    "is_grad_enabled",
    "no_grad",
    "precision",
    "set_default_dtype",
]
