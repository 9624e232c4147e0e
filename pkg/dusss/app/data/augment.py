from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from dusss.app.data.text import hflip_caption, rotate_caption, swap_synonyms
from dusss.models import AugmentSpec, Sample


def augment_arrays(
    image: np.ndarray,
    mask: Optional[np.ndarray],
    text: str,
    spec: AugmentSpec,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, Optional[np.ndarray], str]:
    """
    Random view of one (image, mask, caption) triple.

    Geometric transforms hit image and mask identically and rewrite the
    caption's position words; brightness jitter touches the image only.
    """
    if spec.hflip_prob > 0.0 and rng.random() < spec.hflip_prob:
        image = np.fliplr(image)
        mask = np.fliplr(mask) if mask is not None else None
        text = hflip_caption(text)

    degrees = spec.rotations[int(rng.integers(len(spec.rotations)))] if len(spec.rotations) > 1 else spec.rotations[0]
    if degrees:
        # np.rot90 turns counter-clockwise
        image = np.rot90(image, k=degrees // 90)
        mask = np.rot90(mask, k=degrees // 90) if mask is not None else None
        text = rotate_caption(text, degrees)

    if spec.brightness_jitter > 0.0:
        image = np.clip(image + rng.uniform(-spec.brightness_jitter, spec.brightness_jitter), 0.0, 1.0)

    if spec.synonym_prob > 0.0:
        text = swap_synonyms(text, rng, spec.synonym_prob)

    image = np.ascontiguousarray(image)
    mask = np.ascontiguousarray(mask) if mask is not None else None
    return image, mask, text


def augment(sample: Sample, spec: AugmentSpec, rng: np.random.Generator) -> Sample:
    image, mask, text = augment_arrays(sample.image, sample.mask, sample.text, spec, rng)
    return sample.model_copy(update={"image": image, "mask": mask, "text": text})
