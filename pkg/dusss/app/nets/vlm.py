"""
The pretrained vision-language bundle shared by both training steps.
"""

from __future__ import annotations

from typing import Tuple, Union

import numpy as np

from dusss.app.nets.encoders import GaussianHead, GroundingDecoder, ImageEncoder, TextEncoder
from dusss.app.nets.layers import Module
from dusss.app.nets.temperature import Temperature
from dusss.app.tensor import Tensor
from dusss.models import EncodedPair, ImageFeatures, TextFeatures


class VisionLanguageModel(Module):
    def __init__(
        self,
        *,
        image_size: int,
        patch: int,
        d: int,
        d_s: int,
        d_u: int,
        vocab_size: int,
        pad_id: int,
        l_max: int,
        rng: np.random.Generator,
        tau_init: float = 0.07,
    ):
        self.image_encoder = ImageEncoder(image_size, patch, d, d_s, rng)
        self.text_encoder = TextEncoder(vocab_size, pad_id, l_max, d, d_s, rng)
        self.image_gaussian = GaussianHead(d, d_u, rng)
        self.text_gaussian = GaussianHead(d, d_u, rng)
        self.grounding = GroundingDecoder(d, image_size // patch, image_size, rng)
        self.temperature = Temperature(tau_init)

    def encode_image(self, images: Union[np.ndarray, Tensor]) -> ImageFeatures:
        return self.image_encoder(images)

    def encode_text(self, ids: np.ndarray) -> TextFeatures:
        return self.text_encoder(ids)

    def encode(self, images: Union[np.ndarray, Tensor], ids: np.ndarray, gaussians: bool = True) -> EncodedPair:
        image = self.encode_image(images)
        text = self.encode_text(ids)
        if image.cls.shape[0] != text.cls.shape[0]:
            raise ValueError(f"encode: {image.cls.shape[0]} images vs {text.cls.shape[0]} captions")
        return EncodedPair(
            image=image,
            text=text,
            image_gaussian=self.image_gaussian(image.cls) if gaussians else None,
            text_gaussian=self.text_gaussian(text.cls) if gaussians else None,
        )

    def pixel_and_text_features(self, images: Union[np.ndarray, Tensor], ids: np.ndarray) -> Tuple[Tensor, Tensor]:
        """(v_f, t_f): grounded pixel features (N, d, H, W) and pooled text vectors (N, d)"""
        image = self.encode_image(images)
        text = self.encode_text(ids)
        return self.grounding(image.patch_grid), text.t_f
