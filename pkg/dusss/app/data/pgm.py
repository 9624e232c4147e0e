"""Binary greyscale PGM (P5, maxval 255) codec"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from dusss.errors import DataFormatError

PathLike = Union[str, Path]

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 by rounding; values are clipped first"""
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_pgm(image: np.ndarray) -> bytes:
    pixels = quantize(image)
    if pixels.ndim != 2:
        raise DataFormatError(f"save_pgm: expected a 2-D image, got shape {pixels.shape}")
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def _header(raw: bytes) -> Tuple[int, int, int, int]:
    fields = []
    pos = 0
    for _ in range(4):
        match = _TOKEN.match(raw, pos)
        if match is None:
            raise DataFormatError("load_pgm: truncated header")
        fields.append(match.group(1))
        pos = match.end()
    if fields[0] != b"P5":
        raise DataFormatError(f"load_pgm: wrong magic {fields[0]!r}, expected b'P5'")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise DataFormatError(f"load_pgm: malformed header fields {fields[1:]}") from None
    if width <= 0 or height <= 0:
        raise DataFormatError(f"load_pgm: bad dimensions {width}x{height}")
    if maxval != 255:
        raise DataFormatError(f"load_pgm: maxval {maxval} not supported, only 255")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise DataFormatError("load_pgm: missing separator after header")
    return width, height, maxval, pos + 1


def decode_pgm(raw: bytes) -> np.ndarray:
    """Bytes -> uint8 (H, W) array"""
    width, height, _, offset = _header(raw)
    payload = raw[offset:]
    if len(payload) < width * height:
        raise DataFormatError(f"load_pgm: truncated payload, {len(payload)} of {width * height} bytes")
    return np.frombuffer(payload, dtype=np.uint8, count=width * height).reshape(height, width).copy()


def save_pgm(image: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_pgm(image))
    return path


def load_pgm(path: PathLike) -> np.ndarray:
    """Read a PGM as floats in [0, 1]"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DataFormatError(f"load_pgm: no such file {path}") from None
    try:
        return decode_pgm(raw).astype(np.float64) / 255.0
    except DataFormatError as exc:
        raise DataFormatError(f"{exc} ({path})") from None
