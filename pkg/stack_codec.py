"""
Gaussian blur decomposition stack: the encoder loop, reconstruction,
progressive (partial) reconstruction and enlargement.

Encoding repeats, for each sigma of a strictly decreasing schedule:

    blur_i   = clip(gaussian_blur(spread(work_i), sigma_i), 0, 255)
    layer_i  = layer_encode(blur_i)
    work_i+1 = grain_extract(work_i, layer_decode(layer_i))

and stores the final working image as the base. Because the *decoded*
layer is what gets subtracted, reconstruction

    image = base + sum_i(decoded_i - 128)

is exact whatever the layer codec does; only base-codec loss (and clamp8
saturation) can make it inexact.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from functools import cached_property
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import config
from errors import ParameterError, VerificationError
from job_processor import JobManager
from layer_codecs import CodecParams, LayerCodec, decode_planes, encode_planes
from raster import MID_GREY, Plane, RasterImage
from scale_space import (BlurSchedule, SpreadSpec, blur_array, layer_seed, preset_schedule,
                         resample_linear, schedule_from, spread_array)

logger = logging.getLogger(__name__)

MAX_TOLERANCE_ATTEMPTS = 8


class ChannelMode(IntEnum):
    JOINT = 0
    PER_CHANNEL = 1


class ResidualMode(IntEnum):
    WIDE16 = 0
    CLAMP8 = 1


class Domain(IntEnum):
    IMAGE = 0
    SIGNAL = 1


class ReconstructionOrder(Enum):
    BOTTOM_UP = "bottomup"
    TOP_DOWN = "topdown"


@dataclass(frozen=True)
class BlurLayer:
    """One stored compressed blur: joint layers hold one payload, per-channel layers one per channel."""

    sigma: float
    spread_radius: int
    codec_id: LayerCodec
    quant_bits: int
    downsample: int
    payloads: Tuple[bytes, ...]
    index: int = field(default=0, compare=False)

    @cached_property
    def decoded(self) -> Tuple[Plane, ...]:
        planes: List[Plane] = []
        for payload in self.payloads:
            planes.extend(decode_planes(payload, self.index))
        return tuple(planes)


@dataclass(frozen=True)
class BaseRecord:
    codec_id: LayerCodec
    greyscale: bool
    payloads: Tuple[bytes, ...]

    @cached_property
    def decoded(self) -> Tuple[Plane, ...]:
        planes: List[Plane] = []
        for payload in self.payloads:
            planes.extend(decode_planes(payload, None))
        return tuple(planes)


@dataclass(frozen=True)
class SignalMeta:
    scale: float = 1.0
    offset: float = 0.0
    sample_rate: int = 0


@dataclass(frozen=True)
class BlurStack:
    width: int
    height: int
    channels: int
    channel_mode: ChannelMode
    residual_mode: ResidualMode
    seed: int
    layers: Tuple[BlurLayer, ...]
    base: BaseRecord
    domain: Domain = Domain.IMAGE
    signal_meta: Optional[SignalMeta] = None

    def __post_init__(self):
        if not self.layers:
            raise ParameterError("a stack needs at least one layer")
        sigmas = [layer.sigma for layer in self.layers]
        if any(a <= b for a, b in zip(sigmas, sigmas[1:])):
            raise ParameterError(f"layer sigmas must be strictly decreasing: {sigmas}")
        if self.channels not in (1, 3):
            raise ParameterError(f"channels must be 1 or 3, got {self.channels}")

    @property
    def sigmas(self) -> Tuple[float, ...]:
        return tuple(layer.sigma for layer in self.layers)

    @property
    def layer_count(self) -> int:
        return len(self.layers)


@dataclass
class EncoderConfig:
    """How to decompose: schedule, spread, codecs, residual and channel modes, tolerance."""

    schedule: Union[BlurSchedule, str] = "auto"
    spread: Optional[SpreadSpec] = None
    layer_codec: LayerCodec = LayerCodec.DEFLATE
    quant_bits: Optional[int] = None
    downsample: Optional[int] = None
    base_codec: LayerCodec = LayerCodec.DEFLATE
    base_quant_bits: Optional[int] = None
    residual_mode: ResidualMode = ResidualMode.WIDE16
    channel_mode: ChannelMode = ChannelMode.JOINT
    loss_tolerance: Optional[float] = None
    num_workers: int = 1

    def __post_init__(self):
        self.layer_codec = LayerCodec.parse(self.layer_codec)
        self.base_codec = LayerCodec.parse(self.base_codec)
        self.residual_mode = ResidualMode(self.residual_mode)
        self.channel_mode = ChannelMode(self.channel_mode)
        if self.loss_tolerance is not None and self.loss_tolerance < 0:
            raise ParameterError(f"loss_tolerance must be >= 0, got {self.loss_tolerance}")
        if isinstance(self.schedule, (list, tuple)):
            self.schedule = BlurSchedule.from_sigmas(self.schedule)

    def resolve_schedule(self, width: int, height: int) -> BlurSchedule:
        if isinstance(self.schedule, BlurSchedule):
            return self.schedule
        return preset_schedule(self.schedule, width, height)

    def layer_params(self, sigma: float) -> CodecParams:
        if self.layer_codec is LayerCodec.DOWNQ:
            params = CodecParams.downq_for_sigma(sigma, self.quant_bits)
            if self.downsample is not None:
                params = CodecParams(LayerCodec.DOWNQ, params.quant_bits, self.downsample)
            return params
        return CodecParams(self.layer_codec)

    def base_params(self) -> CodecParams:
        if self.base_codec is LayerCodec.DOWNQ:
            return CodecParams(LayerCodec.DOWNQ, self.base_quant_bits or config.DEFAULT_BASE_QUANT_BITS, 1)
        return CodecParams(self.base_codec)

    @property
    def lossless(self) -> bool:
        return self.base_codec is not LayerCodec.DOWNQ and self.residual_mode is ResidualMode.WIDE16


def blur_planes(work: np.ndarray, sigma: float) -> np.ndarray:
    """Blur every (H, W) channel of a (C, H, W) array."""
    return np.stack([blur_array(c, sigma) for c in work])


@dataclass(frozen=True)
class _LoopJob:
    work: np.ndarray
    sigmas: Tuple[float, ...]
    radii: Tuple[int, ...]
    seed: int
    layer_params: Tuple[CodecParams, ...]
    residual_mode: ResidualMode
    blur: Callable[[np.ndarray, float], np.ndarray]


def _run_loop(job: _LoopJob) -> Tuple[List[bytes], np.ndarray]:
    """The encoder loop over one (C, H, W) working array; returns layer payloads and the final residual."""
    work = job.work.astype(np.int64)
    payloads = []
    for i, (sigma, radius, params) in enumerate(zip(job.sigmas, job.radii, job.layer_params), start=1):
        if radius > 0:
            seed = layer_seed(job.seed, i)
            shifted = np.stack([spread_array(c, radius, seed) for c in work])
        else:
            shifted = work
        blurred = np.clip(np.rint(job.blur(shifted, sigma)), 0, 255).astype(np.int32)
        payload = encode_planes([Plane(c) for c in blurred], params)
        decoded = np.stack([p.samples for p in decode_planes(payload, i)])
        work = work - decoded + MID_GREY
        if job.residual_mode is ResidualMode.CLAMP8:
            work = np.clip(work, 0, 255)
        payloads.append(payload)
        logger.debug(f"layer {i}: sigma={sigma:g} spread={radius} {len(payload)} bytes")
    return payloads, work


def encode_array(work: np.ndarray, cfg: EncoderConfig, schedule: BlurSchedule,
                 domain: Domain = Domain.IMAGE, signal_meta: Optional[SignalMeta] = None,
                 blur: Callable[[np.ndarray, float], np.ndarray] = blur_planes) -> BlurStack:
    """One pass of the encoder over a (C, H, W) array with a fixed schedule."""
    channels, height, width = work.shape
    sigmas = tuple(float(np.float32(s)) for s in schedule.sigmas)
    if any(a <= b for a, b in zip(sigmas, sigmas[1:])):
        raise ParameterError(f"schedule collapses at 32-bit precision: {schedule.sigmas}")
    if cfg.spread is not None:
        spread_spec = cfg.spread.fitted(len(sigmas))
        radii, seed = spread_spec.radii, spread_spec.seed
    else:
        radii, seed = (0,) * len(sigmas), 0
    params = tuple(cfg.layer_params(s) for s in sigmas)

    if cfg.channel_mode is ChannelMode.PER_CHANNEL and channels > 1:
        jobs = [_LoopJob(work[c:c + 1], sigmas, radii, seed, params, cfg.residual_mode, blur)
                for c in range(channels)]
        results = JobManager(cfg.num_workers, name="channel").run(_run_loop, jobs)
        layer_payloads = [tuple(r[0][i] for r in results) for i in range(len(sigmas))]
        residual = np.concatenate([r[1] for r in results])
        base_payloads = tuple(encode_planes([Plane(c)], cfg.base_params()) for c in residual)
    else:
        payloads, residual = _run_loop(_LoopJob(work, sigmas, radii, seed, params, cfg.residual_mode, blur))
        layer_payloads = [(p,) for p in payloads]
        base_payloads = (encode_planes([Plane(c) for c in residual], cfg.base_params()),)

    layers = tuple(
        BlurLayer(sigma, radius, p.codec, p.quant_bits if p.codec is LayerCodec.DOWNQ else 8,
                  p.downsample, payloads, index=i)
        for i, (sigma, radius, p, payloads) in enumerate(zip(sigmas, radii, params, layer_payloads), start=1)
    )
    base = BaseRecord(cfg.base_codec, False, base_payloads)
    return BlurStack(width, height, channels, cfg.channel_mode, cfg.residual_mode, seed,
                     layers, base, domain, signal_meta)


def max_abs_error(stack: BlurStack, reference: np.ndarray) -> int:
    rec = reconstruct_array(stack)
    return int(np.abs(np.clip(rec, 0, 255) - reference).max())


def encode_with_tolerance(work: np.ndarray, cfg: EncoderConfig, schedule: BlurSchedule,
                          encode_once: Callable[[BlurSchedule], BlurStack]) -> BlurStack:
    """Densify the schedule (factor moving toward its square root) until the tolerance is met."""
    stack = encode_once(schedule)
    if cfg.loss_tolerance is None:
        return stack
    factor, floor_factor = schedule.factor, math.sqrt(schedule.factor)
    for attempt in range(MAX_TOLERANCE_ATTEMPTS):
        error = max_abs_error(stack, work)
        if error <= cfg.loss_tolerance:
            logger.info(f"Loss tolerance {cfg.loss_tolerance} met with {stack.layer_count} layers (max error {error})")
            return stack
        if factor - floor_factor < 1e-3 or factor <= 1.0:
            break
        factor = (factor + floor_factor) / 2.0
        schedule = schedule_from(schedule.sigmas[0], factor, schedule.sigma_min)
        logger.debug(f"max error {error} > {cfg.loss_tolerance}, retrying with factor {factor:.4f}")
        stack = encode_once(schedule)
    logger.warning(f"Loss tolerance {cfg.loss_tolerance} not reached at the schedule floor "
                   f"(max error {max_abs_error(stack, work)}, {stack.layer_count} layers)")
    return stack


def encode(image: RasterImage, cfg: EncoderConfig = None) -> BlurStack:
    """Decompose an image into a blur stack."""
    cfg = cfg or EncoderConfig()
    work = image.to_array()
    if work.min() < 0 or work.max() > 255:
        raise ParameterError("input image samples must be in 0..255")
    schedule = cfg.resolve_schedule(image.width, image.height)
    stack = encode_with_tolerance(work, cfg, schedule, lambda s: encode_array(work, cfg, s))
    logger.info(f"Encoded {image.width}x{image.height}x{image.channels} into {stack.layer_count} layers")
    return stack


def decoded_arrays(stack: BlurStack, num_workers: int = 1) -> Tuple[List[np.ndarray], np.ndarray]:
    """Decoded layers as (C, H, W) arrays plus the base, broadcast to the stack's channel count."""
    if num_workers > 1:
        items = [(layer.index, p) for layer in stack.layers for p in layer.payloads]
        items += [(None, p) for p in stack.base.payloads]
        planes = JobManager(num_workers, name="decode").run(_decode_payload_job, items)
        pos, layers = 0, []
        for layer in stack.layers:
            chunk = planes[pos:pos + len(layer.payloads)]
            pos += len(layer.payloads)
            layers.append(np.concatenate(chunk))
        base = np.concatenate(planes[pos:])
    else:
        layers = [np.stack([p.samples for p in layer.decoded]).astype(np.int64) for layer in stack.layers]
        base = np.stack([p.samples for p in stack.base.decoded]).astype(np.int64)
    if base.shape[0] == 1 and stack.channels > 1:
        base = np.repeat(base, stack.channels, axis=0)
    return layers, base


def _decode_payload_job(item) -> np.ndarray:
    index, payload = item
    return np.stack([p.samples for p in decode_planes(payload, index)]).astype(np.int64)


def merge_arrays(start: np.ndarray, layers: Sequence[np.ndarray], residual_mode: ResidualMode) -> np.ndarray:
    """Grain-merge `layers` onto `start` in the given order."""
    rec = start.astype(np.int64)
    for layer in layers:
        rec = rec + layer - MID_GREY
        if residual_mode is ResidualMode.CLAMP8:
            rec = np.clip(rec, 0, 255)
    return rec


def reconstruct_array(stack: BlurStack, num_workers: int = 1) -> np.ndarray:
    """Unclamped (wide16) reconstruction: base merged with layers N..1."""
    layers, base = decoded_arrays(stack, num_workers)
    return merge_arrays(base, layers[::-1], stack.residual_mode)


def _to_image(rec: np.ndarray) -> RasterImage:
    return RasterImage.from_array(np.clip(rec, 0, 255))


def decode(stack: BlurStack, num_workers: int = 1) -> RasterImage:
    """Reconstruct the image; clamping to 0..255 happens only at the end in wide16 mode."""
    return _to_image(reconstruct_array(stack, num_workers))


def partial_reconstruct(stack: BlurStack, k: int, order: ReconstructionOrder = ReconstructionOrder.BOTTOM_UP) -> RasterImage:
    """Progressive frame k.

    bottom_up: base merged with the k finest layers (detail first, colour last).
    top_down:  the k coarsest layers over a flat mid-grey stand-in, base
               added only once every layer is in (focus improves with k).
               Frame N is exact and can be smoother than frame N - 1,
               which still carries the rounding residue the base cancels.
    """
    n = stack.layer_count
    if not 0 <= k <= n:
        raise ParameterError(f"k must be in 0..{n}, got {k}")
    order = ReconstructionOrder(order)
    layers, base = decoded_arrays(stack)
    if order is ReconstructionOrder.BOTTOM_UP:
        rec = merge_arrays(base, layers[::-1][:k], stack.residual_mode)
    elif k == n:
        rec = merge_arrays(base, layers[::-1], stack.residual_mode)
    else:
        flat = np.full_like(base, MID_GREY)
        rec = merge_arrays(flat, layers[:k], stack.residual_mode)
    return _to_image(rec)


def enlarge(stack: BlurStack, s: int) -> RasterImage:
    """Upscale every decoded layer and the base by s (linear interpolation), then merge."""
    if not isinstance(s, (int, np.integer)) or s < 1:
        raise ParameterError(f"scale must be an integer >= 1, got {s}")
    layers, base = decoded_arrays(stack)
    shape = (stack.height * s, stack.width * s)

    def up(arr: np.ndarray) -> np.ndarray:
        return np.stack([resample_linear(c, shape) for c in arr])

    rec = up(base)
    for layer in reversed(layers):
        rec = rec + up(layer) - MID_GREY
        if stack.residual_mode is ResidualMode.CLAMP8:
            rec = np.clip(rec, 0, 255)
    return _to_image(np.rint(rec).astype(np.int64))


def verify(image: RasterImage, stack: BlurStack, tolerance: Optional[float] = None) -> int:
    """Max abs reconstruction error; raises VerificationError above tolerance (0 when None)."""
    error = max_abs_error(stack, image.to_array())
    limit = 0 if tolerance is None else tolerance
    if error > limit:
        raise VerificationError(f"reconstruction max error {error} exceeds tolerance {limit}")
    return error
