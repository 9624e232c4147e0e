from dusss.app.metrics.metrics import THRESHOLD, binarize, dice, evaluate, miou

__all__ = ["THRESHOLD", "binarize", "dice", "evaluate", "miou"]
