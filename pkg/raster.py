"""
Planar raster types and the pixel arithmetic the stack codec is built on.

A Plane is a row-major grid of wide signed integers. Stored images keep
their samples in 0..255; working images produced by grain extraction may
leave that range, which is why every operation here works in int32 and
clamps only where a caller asks for it.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

from errors import ShapeError

MID_GREY = 128
INF = math.inf

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class Colorspace(Enum):
    GREY = "grey"
    RGB = "rgb"


@dataclass(frozen=True, eq=False)
class Plane:
    """One channel of samples, immutable after construction."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.int32, copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"plane samples must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"plane must be at least 1x1, got {arr.shape[1]}x{arr.shape[0]}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def full(cls, width: int, height: int, value: int) -> "Plane":
        return cls(np.full((height, width), value, dtype=np.int32))

    @classmethod
    def from_list(cls, width: int, height: int, values: Sequence[int]) -> "Plane":
        if len(values) != width * height:
            raise ShapeError(f"expected {width * height} samples, got {len(values)}")
        return cls(np.asarray(values, dtype=np.int32).reshape(height, width))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.samples.shape

    def clamped(self) -> "Plane":
        return Plane(np.clip(self.samples, 0, 255))

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    def __hash__(self):
        return hash((self.shape, self.samples.tobytes()))

    def __repr__(self):
        return f"Plane({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class RasterImage:
    """One (grey) or three (rgb) planes of identical dimensions."""

    planes: Tuple[Plane, ...]
    colorspace: Colorspace

    def __post_init__(self):
        planes = tuple(self.planes)
        object.__setattr__(self, "planes", planes)
        expected = 1 if self.colorspace is Colorspace.GREY else 3
        if len(planes) != expected:
            raise ShapeError(f"{self.colorspace.value} image needs {expected} planes, got {len(planes)}")
        shapes = {p.shape for p in planes}
        if len(shapes) != 1:
            raise ShapeError(f"planes disagree on dimensions: {sorted(shapes)}")

    @classmethod
    def from_array(cls, array: np.ndarray) -> "RasterImage":
        """Build from a (H, W) or (C, H, W) array."""
        arr = np.asarray(array)
        if arr.ndim == 2:
            arr = arr[np.newaxis]
        if arr.ndim != 3 or arr.shape[0] not in (1, 3):
            raise ShapeError(f"expected (H, W) or (C, H, W) with C in (1, 3), got {arr.shape}")
        colorspace = Colorspace.GREY if arr.shape[0] == 1 else Colorspace.RGB
        return cls(tuple(Plane(c) for c in arr), colorspace)

    @classmethod
    def from_planes(cls, planes: Sequence[Plane]) -> "RasterImage":
        planes = tuple(planes)
        return cls(planes, Colorspace.GREY if len(planes) == 1 else Colorspace.RGB)

    def to_array(self) -> np.ndarray:
        """Stacked (C, H, W) int32 copy."""
        return np.stack([p.samples for p in self.planes]).astype(np.int32)

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def height(self) -> int:
        return self.planes[0].height

    @property
    def channels(self) -> int:
        return len(self.planes)

    def clamped(self) -> "RasterImage":
        return RasterImage(tuple(p.clamped() for p in self.planes), self.colorspace)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.colorspace is other.colorspace and self.planes == other.planes

    def __hash__(self):
        return hash((self.colorspace, self.planes))

    def __repr__(self):
        return f"RasterImage({self.colorspace.value}, {self.width}x{self.height})"


@dataclass(frozen=True)
class PlaneStats:
    mean: float
    stddev: float
    min: int
    max: int
    histogram: Tuple[int, ...]
    grey_deviation: float

    def to_dict(self) -> dict:
        return {
            'mean': self.mean,
            'stddev': self.stddev,
            'min': self.min,
            'max': self.max,
            'grey_deviation': self.grey_deviation,
        }


def _check_same_shape(a: Plane, b: Plane) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"plane shapes differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def grain_extract(a: Plane, b: Plane, offset: int = MID_GREY, clamp8: bool = False) -> Plane:
    """out = a - b + offset; clamp8 emulates 8-bit layer tooling and is lossy at saturation."""
    _check_same_shape(a, b)
    out = a.samples - b.samples + offset
    if clamp8:
        out = np.clip(out, 0, 255)
    return Plane(out)


def grain_merge(a: Plane, b: Plane, offset: int = MID_GREY, clamp8: bool = False) -> Plane:
    """out = a + b - offset; exact inverse of grain_extract in wide mode."""
    _check_same_shape(a, b)
    out = a.samples + b.samples - offset
    if clamp8:
        out = np.clip(out, 0, 255)
    return Plane(out)


def _check_same_image_shape(a: RasterImage, b: RasterImage) -> None:
    if a.channels != b.channels or (a.width, a.height) != (b.width, b.height):
        raise ShapeError(
            f"image shapes differ: {a.channels}x{a.width}x{a.height} vs {b.channels}x{b.width}x{b.height}"
        )


def mse(a: RasterImage, b: RasterImage) -> float:
    """Mean squared error over all samples, both sides clamped to 0..255."""
    _check_same_image_shape(a, b)
    diff = np.clip(a.to_array(), 0, 255).astype(np.float64) - np.clip(b.to_array(), 0, 255)
    return float(np.mean(diff * diff))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return INF
    return 10.0 * math.log10(255.0 ** 2 / value)


def psnr(a: RasterImage, b: RasterImage) -> float:
    """Peak signal-to-noise ratio in dB; INF when the images are identical."""
    return psnr_from_mse(mse(a, b))


def plane_stats(p: Plane) -> PlaneStats:
    values = p.samples.astype(np.float64)
    histogram = np.bincount(np.clip(p.samples, 0, 255).ravel(), minlength=256)
    return PlaneStats(
        mean=float(values.mean()),
        stddev=float(values.std()),
        min=int(p.samples.min()),
        max=int(p.samples.max()),
        histogram=tuple(int(c) for c in histogram),
        grey_deviation=float(np.abs(values - MID_GREY).mean()),
    )


def luma(red: np.ndarray, green: np.ndarray, blue: np.ndarray) -> np.ndarray:
    wr, wg, wb = LUMA_WEIGHTS
    return np.rint(wr * red.astype(np.float64) + wg * green + wb * blue).astype(np.int32)


def to_greyscale(image: RasterImage) -> RasterImage:
    """Rec.601 luma; grey input is returned as is."""
    if image.colorspace is Colorspace.GREY:
        return image
    r, g, b = (p.samples for p in image.planes)
    return RasterImage((Plane(luma(r, g, b)),), Colorspace.GREY)
