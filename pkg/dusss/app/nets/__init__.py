from dusss.app.nets.encoders import GaussianHead, GroundingDecoder, ImageEncoder, TextEncoder
from dusss.app.nets.layers import Conv2d, Linear, Module, Parameter
from dusss.app.nets.temperature import Temperature
from dusss.app.nets.unet import SegNetwork
from dusss.app.nets.vlm import VisionLanguageModel

__all__ = [
    "Conv2d",
    "GaussianHead",
    "GroundingDecoder",
    "ImageEncoder",
    "Linear",
    "Module",
    "Parameter",
    "SegNetwork",
    "Temperature",
    "TextEncoder",
    "VisionLanguageModel",
]
