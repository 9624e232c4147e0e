"""
Synthetic captioned lesion images.

Each image holds 1-3 bright elliptical blobs on a smooth textured background.
The blobs of one image share a size class and cluster around one anchor (a
quadrant centre or the image centre); the caption's position phrase is derived
from the centroid of the resulting mask, so caption and mask always agree.
"""

from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np

from dusss.app.data.text import make_caption
from dusss.errors import DatasetError
from dusss.models import Sample, Split

logger = logging.getLogger(__name__)

MIN_COUNT = 8
FOREGROUND_RANGE = (0.02, 0.40)
ANCHORS = ["upper left", "upper right", "lower left", "lower right", "center"]
# radius ranges at 32 px; scaled with the image size
SMALL_RADII = (3.0, 4.5)
LARGE_RADII = (5.0, 6.5)
MAX_ATTEMPTS = 1000


def centroid(mask: np.ndarray) -> Tuple[float, float]:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("centroid of an empty mask")
    return float(ys.mean()), float(xs.mean())


def quadrant_of(mask: np.ndarray) -> str:
    """Position phrase for the mask centroid: a quadrant or "center" inside the central band"""
    size = mask.shape[0]
    mid = (size - 1) / 2.0
    cy, cx = centroid(mask)
    dy, dx = cy - mid, cx - mid
    if max(abs(dy), abs(dx)) < size / 8.0:
        return "center"
    vertical = "upper" if dy < 0 else "lower"
    horizontal = "left" if dx < 0 else "right"
    return f"{vertical} {horizontal}"


def is_unambiguous(mask: np.ndarray) -> bool:
    """False when the centroid sits within a pixel of a quadrant or centre-band boundary"""
    size = mask.shape[0]
    mid = (size - 1) / 2.0
    cy, cx = centroid(mask)
    dy, dx = abs(cy - mid), abs(cx - mid)
    if abs(max(dy, dx) - size / 8.0) < 1.0:
        return False
    if max(dy, dx) < size / 8.0:
        return True
    return min(dy, dx) >= 1.0


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(size // 4 + 1, size // 4 + 1))
    texture = np.kron(coarse, np.ones((4, 4)))[:size, :size]
    fine = rng.normal(0.0, 0.03, size=(size, size))
    return np.clip(0.15 + 0.12 * texture + fine, 0.0, 1.0)


def _anchor_centre(anchor: str, size: int) -> Tuple[float, float]:
    mid = (size - 1) / 2.0
    if anchor == "center":
        return mid, mid
    vertical, horizontal = anchor.split()
    cy = size / 4.0 if vertical == "upper" else 3.0 * size / 4.0
    cx = size / 4.0 if horizontal == "left" else 3.0 * size / 4.0
    return cy - 0.5, cx - 0.5


def _draw(rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    scale = size / 32.0
    count = int(rng.integers(1, 4))
    large = bool(rng.random() < 0.5)
    lo, hi = LARGE_RADII if large else SMALL_RADII
    anchor = ANCHORS[int(rng.integers(len(ANCHORS)))]
    ay, ax = _anchor_centre(anchor, size)
    jitter = (size / 32.0) * (1.5 if anchor == "center" else 3.0)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    image = _background(rng, size)
    mask = np.zeros((size, size), dtype=bool)
    for _ in range(count):
        cy = ay + rng.uniform(-jitter, jitter)
        cx = ax + rng.uniform(-jitter, jitter)
        ry, rx = rng.uniform(lo, hi, size=2) * scale
        theta = rng.uniform(0.0, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        u = (yy - cy) * c + (xx - cx) * s
        v = -(yy - cy) * s + (xx - cx) * c
        blob = (u / ry) ** 2 + (v / rx) ** 2 <= 1.0
        intensity = rng.uniform(0.7, 0.95)
        image = np.where(blob, intensity + rng.normal(0.0, 0.02, size=image.shape), image)
        mask |= blob
    return np.clip(image, 0.0, 1.0), mask.astype(np.uint8), count, large


def generate_sample(rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray, str]:
    """(image, mask, caption); redraws until the mask has a clear position and a valid area"""
    lo, hi = FOREGROUND_RANGE
    for _ in range(MAX_ATTEMPTS):
        image, mask, count, large = _draw(rng, size)
        fraction = mask.mean()
        if not lo <= fraction <= hi or not is_unambiguous(mask):
            continue
        return image, mask, make_caption(count, large, quadrant_of(mask))
    raise DatasetError(f"gen_synthetic: no valid sample after {MAX_ATTEMPTS} draws at size {size}")


def split_counts(count: int) -> Tuple[int, int, int]:
    """(train, val, test) sizes: 15% each for val and test, at least 2 of each"""
    n_val = max(2, int(round(0.15 * count)))
    n_test = max(2, int(round(0.15 * count)))
    return count - n_val - n_test, n_val, n_test


def gen_synthetic(count: int, seed: int, size: int = 32) -> List[Sample]:
    """Labeled training pool plus val and test splits, all with masks; byte-identical for a fixed seed"""
    if count < MIN_COUNT:
        raise DatasetError(f"gen_synthetic: count must be >= {MIN_COUNT}, got {count}")
    if size < 16 or size % 8:
        raise DatasetError(f"gen_synthetic: image size must be a multiple of 8 and >= 16, got {size}")

    n_train, n_val, _ = split_counts(count)
    splits = [Split.LABELED if i < n_train else Split.VAL if i < n_train + n_val else Split.TEST for i in range(count)]

    rng = np.random.default_rng(seed)
    width = len(str(count - 1))
    samples = []
    for i in range(count):
        image, mask, caption = generate_sample(rng, size)
        samples.append(Sample(id=f"s{i:0{width}d}", image=image, mask=mask, text=caption, split=splits[i]))
    logger.info("generated %d synthetic samples (size %d, seed %d)", count, size, seed)
    return samples
