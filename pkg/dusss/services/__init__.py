from .ablation_service import ablation_service
from .data_service import data_service
from .eval_service import eval_service
from .inference_service import inference_service
from .pretrain_service import pretrain_service
from .semiseg_service import semiseg_service
from .verify_service import verify_service

__all__ = [
    "ablation_service",
    "data_service",
    "eval_service",
    "inference_service",
    "pretrain_service",
    "semiseg_service",
    "verify_service",
]
