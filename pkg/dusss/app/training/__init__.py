from dusss.app.training.mean_teacher import TeacherStudent, ema_update, text_guided_maps, train_step
from dusss.app.training.pretraining import pretrain_losses, pretrain_step, retrieval_top1, trainable_parameters

__all__ = [
    "TeacherStudent",
    "ema_update",
    "pretrain_losses",
    "pretrain_step",
    "retrieval_top1",
    "text_guided_maps",
    "trainable_parameters",
    "train_step",
]
