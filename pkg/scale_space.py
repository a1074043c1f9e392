"""
Gaussian scale-space primitives: kernels, separable blurring in one or two
dimensions, sigma schedules, seeded spread noise and normalized
convolution of sparse samples.

Kernels are truncated at ceil(3 sigma) and renormalized; borders replicate
the edge sample. Above CASCADE_SIGMA the blur is computed on a 2x box
downsampled copy at sigma/2 and linearly upsampled back, recursively.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import correlate1d, distance_transform_edt

from config import config
from errors import ParameterError
from raster import Plane

logger = logging.getLogger(__name__)

PAPER_SIGMAS = (1000.0, 500.0, 250.0, 125.0, 60.0, 30.0, 15.0, 8.0, 4.0, 2.0, 1.0)
# Per-layer spread radii listed alongside the first decomposition experiment.
PAPER_SPREAD_RADII = (30, 30, 30, 30, 30, 30, 30, 30, 20, 10, 5, 3, 2)

SCHEDULE_PRESETS = ("paper", "auto")
SPREAD_PRESETS = ("paper-spread",)

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


@dataclass(frozen=True)
class BlurSchedule:
    sigmas: Tuple[float, ...]
    factor: float = 2.0
    sigma_min: float = 1.0
    preset: Optional[str] = None

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        object.__setattr__(self, "sigmas", sigmas)
        if not sigmas:
            raise ParameterError("blur schedule is empty")
        if any(s <= 0 for s in sigmas):
            raise ParameterError(f"sigmas must be positive: {sigmas}")
        if any(a <= b for a, b in zip(sigmas, sigmas[1:])):
            raise ParameterError(f"sigmas must be strictly decreasing: {sigmas}")
        if sigmas[-1] < self.sigma_min:
            raise ParameterError(f"last sigma {sigmas[-1]} is below sigma_min {self.sigma_min}")

    @classmethod
    def from_sigmas(cls, sigmas: Sequence[float], preset: Optional[str] = None) -> "BlurSchedule":
        sigmas = tuple(float(s) for s in sigmas)
        if not sigmas:
            raise ParameterError("blur schedule is empty")
        ratios = [a / b for a, b in zip(sigmas, sigmas[1:]) if b > 0]
        factor = max(ratios) if ratios else 2.0
        return cls(sigmas, factor=factor, sigma_min=min(sigmas), preset=preset)

    def __len__(self):
        return len(self.sigmas)


@dataclass(frozen=True)
class SpreadSpec:
    radii: Tuple[int, ...]
    seed: int = 0
    preset: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        radii = tuple(int(r) for r in self.radii)
        object.__setattr__(self, "radii", radii)
        if any(r < 0 for r in radii):
            raise ParameterError(f"spread radii must be >= 0: {radii}")
        if not 0 <= self.seed <= _MASK64:
            raise ParameterError(f"seed must fit in 64 bits: {self.seed}")

    @classmethod
    def uniform(cls, radius: int, count: int, seed: int = 0) -> "SpreadSpec":
        return cls((radius,) * count, seed)

    @classmethod
    def paper(cls, count: int, seed: int = 0) -> "SpreadSpec":
        """Tabulated radii aligned to the schedule tail (fine layers take the small radii)."""
        radii = PAPER_SPREAD_RADII[-count:] if count <= len(PAPER_SPREAD_RADII) else (
            (PAPER_SPREAD_RADII[0],) * (count - len(PAPER_SPREAD_RADII)) + PAPER_SPREAD_RADII
        )
        return cls(radii, seed, preset="paper-spread")

    def fitted(self, count: int) -> "SpreadSpec":
        """Same radii stretched or cut to `count` layers."""
        if len(self.radii) == count:
            return self
        if self.preset == "paper-spread":
            return SpreadSpec.paper(count, self.seed)
        if len(set(self.radii)) == 1 and self.radii:
            return SpreadSpec.uniform(self.radii[0], count, self.seed)
        raise ParameterError(f"spread has {len(self.radii)} radii for a {count}-layer schedule")


def build_schedule(width: int, height: int, factor: float = 2.0, sigma_min: float = 1.0) -> BlurSchedule:
    """sigma_1 = max(width, height) / 2, then floor(sigma / factor) down to sigma_min."""
    return schedule_from(max(width, height) / 2.0, factor, sigma_min)


def schedule_from(sigma: float, factor: float = 2.0, sigma_min: float = 1.0) -> BlurSchedule:
    if not factor > 1:
        raise ParameterError(f"reduction factor must be > 1, got {factor}")
    if not sigma_min > 0:
        raise ParameterError(f"sigma_min must be > 0, got {sigma_min}")
    if sigma <= sigma_min:
        return BlurSchedule((float(sigma_min),), factor, sigma_min)
    sigmas = [sigma]
    while True:
        nxt = float(math.floor(sigmas[-1] / factor))
        if nxt < sigma_min or nxt >= sigmas[-1]:
            break
        sigmas.append(nxt)
    if sigmas[-1] > sigma_min:
        sigmas.append(float(sigma_min))
    return BlurSchedule(tuple(sigmas), factor, sigma_min)


def preset_schedule(name: str, width: int, height: int) -> BlurSchedule:
    if name == "paper":
        return BlurSchedule(PAPER_SIGMAS, 2.0, 1.0, preset="paper")
    if name == "auto":
        schedule = build_schedule(width, height)
        return BlurSchedule(schedule.sigmas, schedule.factor, schedule.sigma_min, preset="auto")
    raise ParameterError(f"unknown schedule preset '{name}', expected one of {SCHEDULE_PRESETS}")


def splitmix64(value: int) -> int:
    """One splitmix64 step from state `value`."""
    z = (value + _GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def splitmix64_stream(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs start..start+count-1 of the stream seeded with `seed`, indexed by position."""
    with np.errstate(over='ignore'):
        k = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(seed & _MASK64) + k * np.uint64(_GAMMA)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def layer_seed(seed: int, layer_index: int) -> int:
    return splitmix64((seed ^ layer_index) & _MASK64)


def gaussian_kernel(sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def box_downsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Block means over factor-sized cells, edges padded by replication."""
    if factor == 1:
        return np.asarray(values, dtype=np.float64)
    arr = np.asarray(values, dtype=np.float64)
    pad = [(0, (-n) % factor) for n in arr.shape]
    arr = np.pad(arr, pad, mode='edge')
    for axis in range(arr.ndim):
        shape = list(arr.shape)
        shape[axis:axis + 1] = [shape[axis] // factor, factor]
        arr = arr.reshape(shape).mean(axis=axis + 1)
    return arr


def resample_linear(values: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Separable linear interpolation with pixel-centre alignment and clamped borders."""
    arr = np.asarray(values, dtype=np.float64)
    for axis, (n_in, n_out) in enumerate(zip(arr.shape, shape)):
        if n_in == n_out:
            continue
        pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        frac = pos - i0
        bshape = [1] * arr.ndim
        bshape[axis] = n_out
        frac = frac.reshape(bshape)
        arr = np.take(arr, i0, axis=axis) * (1.0 - frac) + np.take(arr, i1, axis=axis) * frac
    return arr


def _halve(arr: np.ndarray) -> np.ndarray:
    """2x box downsample along every axis longer than one sample."""
    for axis in range(arr.ndim):
        if arr.shape[axis] < 2:
            continue
        if arr.shape[axis] % 2:
            arr = np.concatenate([arr, np.take(arr, [-1], axis=axis)], axis=axis)
        shape = list(arr.shape)
        shape[axis:axis + 1] = [shape[axis] // 2, 2]
        arr = arr.reshape(shape).mean(axis=axis + 1)
    return arr


def blur_array(values: np.ndarray, sigma: float) -> np.ndarray:
    """Floating-point Gaussian blur over every axis of `values` longer than one sample."""
    arr = np.asarray(values, dtype=np.float64)
    if not sigma > 0:
        raise ParameterError(f"sigma must be > 0, got {sigma}")
    if sigma > config.CASCADE_SIGMA and max(arr.shape) >= 2:
        coarse = blur_array(_halve(arr), sigma / 2.0)
        return resample_linear(coarse, arr.shape)
    weights = gaussian_kernel(sigma)
    out = arr
    for axis in range(arr.ndim):
        if arr.shape[axis] > 1:
            out = correlate1d(out, weights, axis=axis, mode='nearest')
    return out


def gaussian_blur(p: Plane, sigma: float) -> Plane:
    return Plane(np.rint(blur_array(p.samples, sigma)))


def blur1d(samples: np.ndarray, sigma: float) -> np.ndarray:
    s = np.asarray(samples)
    if s.ndim != 1:
        raise ParameterError(f"blur1d expects a vector, got shape {s.shape}")
    return np.rint(blur_array(s, sigma)).astype(np.int32)


def spread_offsets(height: int, width: int, radius: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-pixel (dy, dx) displacements; two draws per pixel in raster order (dx first)."""
    draws = splitmix64_stream(seed, 2 * height * width)
    span = np.uint64(2 * radius + 1)
    offsets = (draws % span).astype(np.int64) - radius
    dx = offsets[0::2].reshape(height, width)
    dy = offsets[1::2].reshape(height, width)
    return dy, dx


def spread_array(values: np.ndarray, radius: int, seed: int) -> np.ndarray:
    arr = np.asarray(values)
    if radius < 0:
        raise ParameterError(f"spread radius must be >= 0, got {radius}")
    if radius == 0:
        return arr.copy()
    height, width = arr.shape
    dy, dx = spread_offsets(height, width, radius, seed)
    ys = np.clip(np.arange(height)[:, None] + dy, 0, height - 1)
    xs = np.clip(np.arange(width)[None, :] + dx, 0, width - 1)
    return arr[ys, xs]


def spread(p: Plane, radius: int, seed: int) -> Plane:
    return Plane(spread_array(p.samples, radius, seed))


def diffuse_sparse(values: Plane, mask: Plane, sigma: float) -> Plane:
    """Normalized convolution blur(values*mask) / blur(mask)."""
    m = mask.samples != 0
    if values.shape != mask.shape:
        raise ParameterError(f"values {values.shape} and mask {mask.shape} differ in shape")
    if not m.any():
        raise ParameterError("mask has no nonzero sample")
    weights = m.astype(np.float64)
    numerator = blur_array(values.samples * weights, sigma)
    denominator = blur_array(weights, sigma)
    covered = denominator >= 1e-6
    out = np.empty_like(numerator)
    out[covered] = numerator[covered] / denominator[covered]
    if not covered.all():
        logger.debug(f"{int((~covered).sum())} samples outside kernel support, using nearest sample")
        _, (iy, ix) = distance_transform_edt(~m, return_indices=True)
        nearest = values.samples[iy, ix]
        out[~covered] = nearest[~covered]
    return Plane(np.rint(out))
