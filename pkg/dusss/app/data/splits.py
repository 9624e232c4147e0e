from __future__ import annotations

import math
from typing import List, Sequence, Tuple

from dusss.app.seeding import derive_rng
from dusss.models import Sample, Split

LABELED_FRACTIONS = (0.25, 0.5, 1.0)


def split_labeled(dataset: Sequence[Sample], fraction: float, seed: int) -> Tuple[List[Sample], List[Sample]]:
    """
    Partition the training pool into (X_l, X_u).

    A seeded shuffle keeps the first ceil(fraction * N) samples labeled; the
    rest become unlabeled and lose their in-memory masks.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"split_labeled: fraction must lie in (0, 1], got {fraction}")
    pool = [s for s in dataset if s.split is Split.LABELED]
    if len(pool) != len(dataset):
        raise ValueError("split_labeled: only training samples can be split")

    order = derive_rng(seed, "split_labeled").permutation(len(pool))
    n_labeled = math.ceil(fraction * len(pool) - 1e-9)
    labeled = sorted((pool[i] for i in order[:n_labeled]), key=lambda s: s.id)
    unlabeled = sorted(
        (pool[i].model_copy(update={"mask": None, "split": Split.UNLABELED}) for i in order[n_labeled:]),
        key=lambda s: s.id,
    )
    return labeled, unlabeled
