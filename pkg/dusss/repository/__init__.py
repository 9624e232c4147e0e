from .checkpoint_repository import checkpoint_repo_ins
from .dataset_repository import dataset_repo_ins
from .metrics_repository import metrics_repo_ins

__all__ = ["checkpoint_repo_ins", "dataset_repo_ins", "metrics_repo_ins"]
