"""
Stack inspection: per-layer statistics, noise-layer identification,
selective re-blurring (denoising), difference images and corruption
resilience.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from config import config
from container import base_record_size, layer_record_size
from errors import ParameterError, ShapeError
from layer_codecs import CodecParams, LayerCodec, decode_planes, encode_planes, read_header
from raster import MID_GREY, Plane, PlaneStats, RasterImage, luma, plane_stats, psnr, psnr_from_mse
from scale_space import blur_array
from stack_codec import (BaseRecord, BlurLayer, BlurStack, ResidualMode, decode, decoded_arrays,
                         merge_arrays)

logger = logging.getLogger(__name__)

_EPSILON = 1e-9
_MAD_TO_SIGMA = 0.6745

LAYER_REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["width", "height", "channels", "seed", "layers"],
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "channels": {"type": "integer", "enum": [1, 3]},
        "seed": {"type": "integer", "minimum": 0},
        "layers": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["index", "sigma", "bytes", "mean", "stddev", "grey_deviation", "hf_ratio", "noisy"],
                "properties": {
                    "index": {"type": "integer", "minimum": 1},
                    "role": {"type": "string", "enum": ["layer", "base"]},
                    "sigma": {"type": "number", "minimum": 0},
                    "bytes": {"type": "integer", "minimum": 0},
                    "mean": {"type": "array", "items": {"type": "number"}},
                    "stddev": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "grey_deviation": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "hf_ratio": {"type": "number", "minimum": 0},
                    "noisy": {"type": "boolean"},
                },
            },
        },
    },
}


class DiffMode(Enum):
    ABSOLUTE = "absolute"
    GRAIN = "grain"


@dataclass(frozen=True)
class LayerReport:
    index: int
    sigma: float
    payload_bytes: int
    stats: Tuple[PlaneStats, ...]
    hf_ratio: float
    noisy: bool
    role: str = "layer"
    noise_share: float = 0.0

    def to_dict(self) -> Dict:
        return {
            'index': self.index,
            'role': self.role,
            'sigma': self.sigma,
            'bytes': self.payload_bytes,
            'mean': [s.mean for s in self.stats],
            'stddev': [s.stddev for s in self.stats],
            'grey_deviation': [s.grey_deviation for s in self.stats],
            'hf_ratio': self.hf_ratio,
            'noisy': self.noisy,
        }


@dataclass(frozen=True)
class CorruptionReport:
    layer_index: int
    psnr_clean: float
    psnr_corrupted: float
    psnr_predicted: float


def high_frequency_rms(values: np.ndarray, detail_sigma: float = None) -> float:
    """RMS of each channel minus its Gaussian blur at the detail sigma, over all channels."""
    sigma = detail_sigma or config.HF_DETAIL_SIGMA
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    detail = np.stack([c - blur_array(c, sigma) for c in arr])
    return float(np.sqrt(np.mean(detail * detail)))


def hf_ratio(values: np.ndarray) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return high_frequency_rms(arr) / (float(arr.std()) + _EPSILON)


def bottom_half(layer_count: int) -> range:
    """Layer indices deeper than ceil(N / 2)."""
    return range(math.ceil(layer_count / 2) + 1, layer_count + 1)


def estimate_noise_sigma(values: np.ndarray) -> float:
    """Robust white-noise level from the median absolute 5-point Laplacian (1-D second difference for rows)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    _, h, w = arr.shape
    if h >= 3 and w >= 3:
        c = arr[:, 1:-1, 1:-1]
        lap = 4 * c - arr[:, :-2, 1:-1] - arr[:, 2:, 1:-1] - arr[:, 1:-1, :-2] - arr[:, 1:-1, 2:]
        gain = 20.0
    else:
        flat = arr.reshape(arr.shape[0], -1) if min(h, w) == 1 else arr[:, 0, :]
        lap = flat[:, :-2] - 2 * flat[:, 1:-1] + flat[:, 2:]
        gain = 6.0
    if lap.size == 0:
        return 0.0
    return float(np.median(np.abs(lap)) / _MAD_TO_SIGMA / math.sqrt(gain))


@lru_cache(maxsize=32)
def white_noise_gains(height: int, width: int, sigmas: Tuple[float, ...]) -> Tuple[float, ...]:
    """Variance each layer keeps from unit white noise, from the Gaussian transfer functions of the chain."""
    fy = np.fft.fftfreq(height)[:, np.newaxis]
    fx = np.fft.fftfreq(width)[np.newaxis, :]
    f2 = fy * fy + fx * fx
    passed = np.ones_like(f2)
    gains = []
    for sigma in sigmas:
        g = np.exp(-2.0 * math.pi ** 2 * sigma * sigma * f2)
        band = g * passed
        band[0, 0] = 0.0
        gains.append(float(np.mean(band * band)))
        passed = passed * (1.0 - g)
    return tuple(gains)


def noise_shares(stack: BlurStack) -> Tuple[float, List[float]]:
    """Estimated noise sigma of the decoded image and, per layer, the share of its variance that noise explains."""
    sigma_hat = estimate_noise_sigma(decode(stack).to_array())
    gains = white_noise_gains(stack.height, stack.width, tuple(float(s) for s in stack.sigmas))
    shares = []
    for layer, gain in zip(stack.layers, gains):
        variance = float(np.mean([np.var(p.samples.astype(np.float64)) for p in layer.decoded]))
        expected = sigma_hat * sigma_hat * gain
        shares.append(min(1.0, expected / variance) if variance > _EPSILON else 0.0)
    return sigma_hat, shares


def layer_report(stack: BlurStack, threshold: float = None) -> List[LayerReport]:
    """One report per layer, then one for the base (index N + 1, sigma 0).

    A bottom-half layer is noisy when white noise above NOISE_FLOOR explains
    more than `threshold` of its variance.
    """
    tau = config.NOISE_THRESHOLD if threshold is None else threshold
    deep = bottom_half(stack.layer_count)
    sigma_hat, shares = noise_shares(stack)
    noisy_image = sigma_hat > config.NOISE_FLOOR
    logger.debug(f"estimated noise sigma {sigma_hat:.2f} (floor {config.NOISE_FLOOR:g})")
    reports = []
    for layer, share in zip(stack.layers, shares):
        planes = layer.decoded
        ratio = hf_ratio(np.stack([p.samples for p in planes]))
        reports.append(LayerReport(
            index=layer.index,
            sigma=layer.sigma,
            payload_bytes=layer_record_size(layer),
            stats=tuple(plane_stats(p) for p in planes),
            hf_ratio=ratio,
            noisy=noisy_image and share > tau and layer.index in deep,
            noise_share=share,
        ))
        logger.debug(f"layer {layer.index}: hf_ratio={ratio:.3f} noise_share={share:.3f} "
                     f"noisy={reports[-1].noisy}")
    base_planes = stack.base.decoded
    reports.append(LayerReport(
        index=stack.layer_count + 1,
        sigma=0.0,
        payload_bytes=base_record_size(stack.base),
        stats=tuple(plane_stats(p) for p in base_planes),
        hf_ratio=hf_ratio(np.stack([p.samples for p in base_planes])),
        noisy=False,
        role="base",
    ))
    return reports


def classify_noisy_layers(stack: BlurStack, threshold: float = None) -> FrozenSet[int]:
    return frozenset(r.index for r in layer_report(stack, threshold) if r.noisy)


def base_stats(stack: BlurStack) -> Tuple[PlaneStats, ...]:
    """Per-channel statistics of the decoded base."""
    return tuple(plane_stats(p) for p in stack.base.decoded)


def layer_report_json(stack: BlurStack, reports: List[LayerReport]) -> Dict:
    return {
        'width': stack.width,
        'height': stack.height,
        'channels': stack.channels,
        'channel_mode': stack.channel_mode.name.lower(),
        'residual_mode': stack.residual_mode.name.lower(),
        'seed': stack.seed,
        'layers': [r.to_dict() for r in reports],
    }


def layer_report_table(reports: List[LayerReport]) -> str:
    """Line-oriented table, one row per layer and a final base row."""
    lines = [f"{'layer':>5} {'sigma':>8} {'bytes':>9} {'mean':>20} {'stddev':>8} {'grey_dev':>8} {'hf':>6} noisy"]
    for r in reports:
        label = "base" if r.role == "base" else str(r.index)
        means = "/".join(f"{s.mean:.1f}" for s in r.stats)
        stddev = max(s.stddev for s in r.stats)
        grey = max(s.grey_deviation for s in r.stats)
        lines.append(f"{label:>5} {r.sigma:>8g} {r.payload_bytes:>9d} {means:>20} {stddev:>8.2f} "
                     f"{grey:>8.2f} {r.hf_ratio:>6.3f} {'yes' if r.noisy else 'no'}")
    return "\n".join(lines) + "\n"


def _codec_params(codec_id: LayerCodec, payload: bytes) -> CodecParams:
    header = read_header(payload)
    if codec_id is LayerCodec.DOWNQ:
        return CodecParams(codec_id, header.quant_bits, header.downsample)
    return CodecParams(codec_id)


def _reblur(planes: Iterable[Plane], sigma: float, clamp: bool) -> List[Plane]:
    out = []
    for p in planes:
        values = np.rint(blur_array(p.samples, sigma))
        out.append(Plane(np.clip(values, 0, 255) if clamp else values))
    return out


def denoise(stack: BlurStack, layers_to_blur: Iterable[int] = (), layer_sigma: float = 10.0,
            base_grey: bool = False, base_sigma: Optional[float] = None) -> BlurStack:
    """Re-blur the selected layers and optionally grey and blur the base; other records stay byte-identical."""
    indices = sorted(set(int(i) for i in layers_to_blur))
    bad = [i for i in indices if not 1 <= i <= stack.layer_count]
    if bad:
        raise ParameterError(f"layer indices {bad} outside 1..{stack.layer_count}")
    if indices and not layer_sigma > 0:
        raise ParameterError(f"layer_sigma must be > 0, got {layer_sigma}")
    if base_sigma is not None and not base_sigma > 0:
        raise ParameterError(f"base_sigma must be > 0, got {base_sigma}")

    layers: List[BlurLayer] = list(stack.layers)
    for i in indices:
        layer = layers[i - 1]
        payloads = tuple(
            encode_planes(_reblur(decode_planes(p, i), layer_sigma, clamp=True), _codec_params(layer.codec_id, p))
            for p in layer.payloads
        )
        layers[i - 1] = dataclasses.replace(layer, payloads=payloads)
        logger.info(f"Re-blurred layer {i} at sigma {layer_sigma:g}")

    base = stack.base
    greying = base_grey and stack.channels > 1 and not base.greyscale
    if greying or base_sigma is not None:
        planes = list(base.decoded)
        if greying:
            planes = [Plane(luma(*(p.samples for p in planes)))]
        if base_sigma is not None:
            planes = _reblur(planes, base_sigma, clamp=False)
        params = _codec_params(base.codec_id, base.payloads[0])
        if len(planes) == 1 or len(base.payloads) == 1:
            payloads = (encode_planes(planes, params),)
        else:
            payloads = tuple(encode_planes([p], params) for p in planes)
        base = BaseRecord(base.codec_id, base.greyscale or greying, payloads)
        logger.info(f"Rewrote base (greyscale={base.greyscale}, sigma={base_sigma})")

    return dataclasses.replace(stack, layers=tuple(layers), base=base)


def diff_image(a: RasterImage, b: RasterImage, mode=DiffMode.ABSOLUTE) -> RasterImage:
    """absolute: |a - b| (black when equal); grain: clamp(a - b + 128)."""
    if a.channels != b.channels or (a.width, a.height) != (b.width, b.height):
        raise ShapeError(
            f"image shapes differ: {a.channels}x{a.width}x{a.height} vs {b.channels}x{b.width}x{b.height}")
    mode = DiffMode(mode)
    delta = a.to_array().astype(np.int64) - b.to_array()
    if mode is DiffMode.ABSOLUTE:
        out = np.abs(delta)
    else:
        out = delta + MID_GREY
    return RasterImage.from_array(np.clip(out, 0, 255))


def corruption_test(stack: BlurStack, layer_index: int) -> CorruptionReport:
    """Replace one decoded layer by flat mid-grey and measure the damage against decode(stack)."""
    if not 1 <= layer_index <= stack.layer_count:
        raise ParameterError(f"layer index must be in 1..{stack.layer_count}, got {layer_index}")
    layers, base = decoded_arrays(stack)
    reference = decode(stack)
    target = layers[layer_index - 1]
    corrupted_layers = list(layers)
    corrupted_layers[layer_index - 1] = np.full_like(target, MID_GREY)
    corrupted = merge_arrays(base, corrupted_layers[::-1], stack.residual_mode)
    corrupted_image = RasterImage.from_array(np.clip(corrupted, 0, 255))

    deviation = (target - MID_GREY).astype(np.float64)
    predicted = psnr_from_mse(float(np.mean(deviation * deviation)))
    report = CorruptionReport(
        layer_index=layer_index,
        psnr_clean=psnr(reference, reference),
        psnr_corrupted=psnr(reference, corrupted_image),
        psnr_predicted=predicted,
    )
    if stack.residual_mode is ResidualMode.WIDE16 and abs(report.psnr_corrupted - predicted) > 0.01 \
            and math.isfinite(predicted):
        logger.warning(f"layer {layer_index}: measured {report.psnr_corrupted:.3f} dB differs from "
                       f"closed form {predicted:.3f} dB (clamping at 0/255)")
    return report
