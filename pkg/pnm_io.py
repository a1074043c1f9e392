"""
Binary PGM (P5) and PPM (P6) reading and writing, maxval 255 only.

The header grammar follows netpbm: magic, whitespace-separated width,
height and maxval (with '#' comments allowed between tokens), then exactly
one whitespace byte before the row-major samples.
"""

import logging
import os
import tempfile
from typing import Tuple

import numpy as np

from errors import PNMParseError, UnsupportedDepthError
from raster import Colorspace, Plane, RasterImage

logger = logging.getLogger(__name__)

_WHITESPACE = b" \t\r\n\v\f"
_MAGIC = {b"P5": Colorspace.GREY, b"P6": Colorspace.RGB}


def _skip_space_and_comments(data: bytes, pos: int) -> int:
    while pos < len(data):
        ch = data[pos:pos + 1]
        if ch in _WHITESPACE:
            pos += 1
        elif ch == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    return pos


def _read_int(data: bytes, pos: int, field: str) -> Tuple[int, int]:
    pos = _skip_space_and_comments(data, pos)
    start = pos
    while pos < len(data) and data[pos:pos + 1].isdigit():
        pos += 1
    if start == pos:
        raise PNMParseError(f"expected decimal {field}", start)
    return int(data[start:pos]), pos


def load_pnm(data: bytes) -> RasterImage:
    """Parse P5/P6 bytes into a grey or rgb image."""
    magic = data[:2]
    if magic not in _MAGIC:
        raise PNMParseError(f"unsupported magic {magic!r}", 0)
    colorspace = _MAGIC[magic]
    if len(data) < 3 or data[2:3] not in _WHITESPACE:
        raise PNMParseError("expected whitespace after magic", 2)

    width, pos = _read_int(data, 2, "width")
    height, pos = _read_int(data, pos, "height")
    if width < 1 or height < 1:
        raise PNMParseError(f"invalid dimensions {width}x{height}", pos)
    maxval_offset = _skip_space_and_comments(data, pos)
    maxval, pos = _read_int(data, pos, "maxval")
    if maxval != 255:
        raise UnsupportedDepthError(maxval, maxval_offset)
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise PNMParseError("expected single whitespace after maxval", pos)
    pos += 1

    channels = 1 if colorspace is Colorspace.GREY else 3
    expected = width * height * channels
    body = data[pos:pos + expected]
    if len(body) != expected:
        raise PNMParseError(f"truncated sample data: expected {expected} bytes, got {len(body)}", pos + len(body))

    samples = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    planes = tuple(Plane(samples[:, :, c]) for c in range(channels))
    return RasterImage(planes, colorspace)


def save_pnm(image: RasterImage) -> bytes:
    """Serialise to P5/P6; samples are clamped to 0..255 at write."""
    magic = b"P5" if image.colorspace is Colorspace.GREY else b"P6"
    header = magic + b"\n%d %d\n255\n" % (image.width, image.height)
    interleaved = np.clip(image.to_array(), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    return header + interleaved.tobytes()


def read_pnm_file(path: str) -> RasterImage:
    with open(path, 'rb') as f:
        return load_pnm(f.read())


def atomic_write(path: str, data: bytes) -> None:
    """Write via a temporary sibling so a failure never leaves a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {len(data)} bytes to {path}")


def write_pnm_file(path: str, image: RasterImage) -> None:
    atomic_write(path, save_pnm(image))
