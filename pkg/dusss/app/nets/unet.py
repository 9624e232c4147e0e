from __future__ import annotations

from typing import Union

import numpy as np

from dusss.app.nets.encoders import as_image_batch
from dusss.app.nets.layers import Conv2d, Module
from dusss.app.tensor import Tensor, functional as F
from dusss.errors import ShapeError


class ConvBlock(Module):
    """3x3 conv + tanh, twice"""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator):
        self.first = Conv2d(in_channels, out_channels, 3, rng, padding=1)
        self.second = Conv2d(out_channels, out_channels, 3, rng, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        return F.tanh(self.second(F.tanh(self.first(x))))


class SegNetwork(Module):
    """Two-level U-shaped encoder-decoder; H x W grayscale -> H x W logits"""

    def __init__(self, channels: int, rng: np.random.Generator):
        c = channels
        self.enc1 = ConvBlock(1, c, rng)
        self.enc2 = ConvBlock(c, 2 * c, rng)
        self.bottleneck = ConvBlock(2 * c, 4 * c, rng)
        self.dec2 = ConvBlock(6 * c, 2 * c, rng)
        self.dec1 = ConvBlock(3 * c, c, rng)
        self.head = Conv2d(c, 1, 1, rng)

    def forward(self, images: Union[np.ndarray, Tensor]) -> Tensor:
        x = as_image_batch(images)
        h, w = x.shape[2], x.shape[3]
        if h % 4 or w % 4:
            raise ShapeError(f"seg_forward: spatial shape {(h, w)} must be divisible by 4")
        e1 = self.enc1(x)
        e2 = self.enc2(F.avg_pool2d(e1))
        mid = self.bottleneck(F.avg_pool2d(e2))
        d2 = self.dec2(F.concat([F.upsample_bilinear2x(mid), e2], axis=1))
        d1 = self.dec1(F.concat([F.upsample_bilinear2x(d2), e1], axis=1))
        logits = self.head(d1)
        return logits.reshape(logits.shape[0], h, w)

    def zero_head_(self) -> "SegNetwork":
        for p in self.head.parameters():
            p.data = np.zeros_like(p.data)
        return self
