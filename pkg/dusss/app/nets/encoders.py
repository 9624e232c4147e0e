"""
Toy image/text encoders, the Gaussian uncertainty head and the grounding decoder.
"""

from __future__ import annotations

import logging
import math
from typing import Union

import numpy as np

from dusss.app.nets.layers import Conv2d, Linear, Module, Parameter
from dusss.app.tensor import Tensor, functional as F, get_default_dtype
from dusss.errors import DomainError, ShapeError
from dusss.models import GaussianEmbedding, ImageFeatures, TextFeatures

logger = logging.getLogger(__name__)

# additive attention bias on padded keys; large enough that exp() underflows to 0
PAD_BIAS = -1e4
# log-variance range kept finite so sigma neither underflows to 0 nor overflows
LOG_VAR_BOUND = 40.0


def as_image_batch(images: Union[np.ndarray, Tensor]) -> Tensor:
    """(N, H, W) or (H, W) grayscale -> (N, 1, H, W) tensor"""
    if isinstance(images, Tensor):
        data = images
    else:
        data = Tensor(np.asarray(images, dtype=get_default_dtype()))
    if data.ndim == 2:
        data = data.reshape(1, *data.shape)
    if data.ndim != 3:
        raise ShapeError(f"expected (N, H, W) grayscale images, got {data.shape}")
    return data.reshape(data.shape[0], 1, data.shape[1], data.shape[2])


class ImageEncoder(Module):
    """Patch embedding + 1x1 mixing; [CLS] is attention pooling over patches"""

    def __init__(self, image_size: int, patch: int, d: int, d_s: int, rng: np.random.Generator):
        if image_size % patch:
            raise ShapeError(f"image size {image_size} not divisible by patch size {patch}")
        self.image_size, self.patch, self.d = image_size, patch, d
        self.grid = image_size // patch
        self.patch_embed = Conv2d(1, d, patch, rng, stride=patch)
        # zero at init: a blank image encodes to a blank patch grid
        self.pos_embed = Parameter(np.zeros((1, d, self.grid, self.grid)))
        self.mix = Conv2d(d, d, 1, rng)
        self.pool_query = Parameter(rng.uniform(-1.0, 1.0, size=(d, 1)) / math.sqrt(d))
        self.project = Linear(d, d_s, rng)

    def forward(self, images: Union[np.ndarray, Tensor]) -> ImageFeatures:
        x = as_image_batch(images)
        h, w = x.shape[2], x.shape[3]
        if h % self.patch or w % self.patch:
            raise ShapeError(f"encode_image: {h}x{w} input not divisible by patch size {self.patch}")
        if h != self.image_size or w != self.image_size:
            raise ShapeError(f"encode_image: expected {self.image_size}x{self.image_size}, got {h}x{w}")

        hidden = F.tanh(self.patch_embed(x) + self.pos_embed)
        patch_grid = F.tanh(self.mix(hidden))

        n = patch_grid.shape[0]
        tokens = patch_grid.reshape(n, self.d, self.grid * self.grid).transpose(0, 2, 1)
        scores = F.scale(tokens @ self.pool_query, 1.0 / math.sqrt(self.d))
        weights = F.softmax(scores, axis=1)
        cls = (tokens * weights).sum(axis=1)
        return ImageFeatures(patch_grid=patch_grid, cls=cls, semantic=self.project(cls))


class TextEncoder(Module):
    """Token + position embeddings, one masked self-attention block; [CLS] is position 0"""

    def __init__(self, vocab_size: int, pad_id: int, l_max: int, d: int, d_s: int, rng: np.random.Generator):
        self.vocab_size, self.pad_id, self.l_max, self.d = vocab_size, pad_id, l_max, d
        self.token_embed = Parameter(rng.uniform(-0.5, 0.5, size=(vocab_size, d)))
        self.pos_embed = Parameter(0.02 * rng.standard_normal((l_max, d)))
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.ff_in = Linear(d, d, rng)
        self.ff_out = Linear(d, d, rng)
        self.project = Linear(d, d_s, rng)

    def forward(self, ids: np.ndarray) -> TextFeatures:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.shape[1] != self.l_max:
            raise ShapeError(f"encode_text: expected token length {self.l_max}, got {ids.shape[1]}")
        unknown = ids[(ids < 0) | (ids >= self.vocab_size)]
        if unknown.size:
            raise DomainError(f"encode_text: unknown token id(s) {sorted(set(unknown.tolist()))}")

        dtype = get_default_dtype()
        pad_mask = ids != self.pad_id
        x = F.embedding(self.token_embed, ids) + self.pos_embed

        key_bias = Tensor(np.where(pad_mask, 0.0, PAD_BIAS)[:, None, :].astype(dtype))
        scores = F.scale(self.query(x) @ self.key(x).transpose(0, 2, 1), 1.0 / math.sqrt(self.d)) + key_bias
        attended = F.softmax(scores, axis=-1) @ self.value(x)
        hidden = x + self.out(attended)
        token_grid = hidden + self.ff_out(F.tanh(self.ff_in(hidden)))

        cls = token_grid[:, 0, :]
        counts = np.maximum(pad_mask.sum(axis=1, keepdims=True), 1)
        pool = Tensor((pad_mask / counts)[:, :, None].astype(dtype))
        t_f = (token_grid * pool).sum(axis=1)
        return TextFeatures(
            token_grid=token_grid,
            cls=cls,
            semantic=self.project(cls),
            t_f=t_f,
            pad_mask=pad_mask,
        )


class GaussianHead(Module):
    """[CLS] -> diagonal Gaussian; sigma = exp(0.5 * log-variance) is always positive"""

    def __init__(self, d: int, d_u: int, rng: np.random.Generator):
        self.mu = Linear(d, d_u, rng)
        self.log_var = Linear(d, d_u, rng)

    def forward(self, cls: Tensor) -> GaussianEmbedding:
        if not np.all(np.isfinite(cls.data)):
            raise DomainError("gaussian_head: non-finite [CLS] input")
        log_var = F.clamp(self.log_var(cls), lo=-LOG_VAR_BOUND, hi=LOG_VAR_BOUND)
        return GaussianEmbedding(mu=self.mu(cls), sigma=F.exp(F.scale(log_var, 0.5)))

    def zero_(self) -> "GaussianHead":
        for p in self.parameters():
            p.data = np.zeros_like(p.data)
        return self


class GroundingDecoder(Module):
    """Lifts the patch grid to pixel features by repeated (bilinear x2 upsample, 3x3 conv) stages"""

    def __init__(self, d: int, grid: int, image_size: int, rng: np.random.Generator, bias: bool = True):
        stages = int(round(math.log2(image_size / grid)))
        if grid * 2**stages != image_size:
            raise ShapeError(f"grounding: patch grid {grid} cannot reach {image_size} by doubling")
        self.grid, self.image_size = grid, image_size
        self.stages = [Conv2d(d, d, 3, rng, padding=1, bias=bias) for _ in range(stages)]

    def forward(self, patch_grid: Tensor) -> Tensor:
        if patch_grid.ndim != 4 or patch_grid.shape[2] != self.grid or patch_grid.shape[3] != self.grid:
            raise ShapeError(f"ground: expected (N, d, {self.grid}, {self.grid}) patch grid, got {patch_grid.shape}")
        x = patch_grid
        for i, conv in enumerate(self.stages):
            x = conv(F.upsample_bilinear2x(x))
            if i < len(self.stages) - 1:
                x = F.tanh(x)
        if x.shape[2] != self.image_size:
            raise ShapeError(f"ground: decoded {x.shape[2]} px, configured image size {self.image_size}")
        return x

    def identity_(self) -> "GroundingDecoder":
        for conv in self.stages:
            conv.identity_()
        return self
