"""Minimal binary PNM codec (P6 colour, P5 grey), 8-bit only."""

from __future__ import annotations

from typing import NamedTuple, Tuple

import numpy as np

from .errors import DimensionError, FormatError

_CHANNELS = {b"P6": 3, b"P5": 1}
_WHITESPACE = b" \t\r\n\v\f"


class ImageShape(NamedTuple):
    width: int
    height: int
    channels: int

    @property
    def size(self) -> int:
        return self.width * self.height * self.channels


def _tokens(data: bytes, count: int) -> Tuple[list, int]:
    """Read ``count`` header tokens, skipping whitespace and # comments."""
    out, pos = [], 0
    while len(out) < count:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        out.append(data[start:pos])
    return out, pos


def decode(data: bytes) -> Tuple[np.ndarray, ImageShape]:
    """Raw bytes of a P5/P6 file -> (uint8 raster, shape)."""
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic not in _CHANNELS:
        raise FormatError(f"unsupported magic {magic!r}; expected P6 or P5")
    try:
        width, height, maxv = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"bad PNM header field: {exc}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"bad image size {width}x{height}")
    if maxv != 255:
        raise FormatError(f"unsupported maxval {maxv}; only 8-bit (255) images are handled")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("missing whitespace after PNM header")
    pos += 1
    shape = ImageShape(width, height, _CHANNELS[magic])
    raster = np.frombuffer(data, dtype=np.uint8, count=-1, offset=pos)
    if raster.size < shape.size:
        raise FormatError(f"truncated raster: {raster.size} of {shape.size} bytes")
    return raster[: shape.size].copy(), shape


def encode(raster, shape: ImageShape) -> bytes:
    magic = b"P6" if shape.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, shape.width, shape.height)
    return header + np.asarray(raster, dtype=np.uint8).tobytes()


def load_image(path) -> Tuple[np.ndarray, ImageShape]:
    """Flattened, channel-interleaved row-major vector in [0, 1] plus its shape."""
    with open(path, "rb") as fh:
        raster, shape = decode(fh.read())
    return raster.astype(np.float64) / 255.0, shape


def quantize(x) -> np.ndarray:
    """Clamp to [0, 1], scale to 0..255, round half away from zero."""
    v = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def save_image(x, shape: ImageShape, path) -> None:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != shape.size:
        raise DimensionError(f"vector of length {x.size} does not fit image {shape}")
    with open(path, "wb") as fh:
        fh.write(encode(quantize(x), shape))


def shape_for(f: int) -> ImageShape:
    """A near-square image shape holding exactly ``f`` values.

    Colour when f is divisible by 3, grey otherwise.
    """
    channels = 3 if f % 3 == 0 else 1
    pixels = f // channels
    height = max(d for d in range(1, int(pixels ** 0.5) + 1) if pixels % d == 0)
    return ImageShape(pixels // height, height, channels)
