"""
Self-contained codecs for stored blur layers and base images.

Every payload starts with a fixed little-endian header
(codec, plane count, bytes per sample, quant bits, downsample, width,
height) so that it can be decoded without the container around it.

  RAW      samples verbatim, row-major, plane after plane
  DEFLATE  left-predictor residuals (mod 2^bits) in a zlib stream
  DOWNQ    box downsample, uniform quantizer centred on mid-grey, then
           DEFLATE; decoding dequantizes and linearly upsamples
"""

import logging
import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence, Tuple

import numpy as np

from config import config
from errors import LayerDecodeError, ParameterError
from raster import MID_GREY, Plane
from scale_space import box_downsample, resample_linear

logger = logging.getLogger(__name__)

_HEADER = struct.Struct('<BBBBHII')
MAX_DOWNSAMPLE = 32


class LayerCodec(IntEnum):
    RAW = 0
    DEFLATE = 1
    DOWNQ = 2

    @classmethod
    def parse(cls, value) -> "LayerCodec":
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ParameterError(f"unknown codec '{value}', expected raw, deflate or downq")
        try:
            return cls(int(value))
        except ValueError:
            raise ParameterError(f"invalid codec id {value}")


@dataclass(frozen=True)
class CodecParams:
    codec: LayerCodec = LayerCodec.DEFLATE
    quant_bits: int = 8
    downsample: int = 1

    def __post_init__(self):
        object.__setattr__(self, "codec", LayerCodec.parse(self.codec))
        if self.codec is LayerCodec.DOWNQ:
            if not 1 <= self.quant_bits <= 8:
                raise ParameterError(f"quant_bits must be in 1..8, got {self.quant_bits}")
            if not 1 <= self.downsample <= MAX_DOWNSAMPLE:
                raise ParameterError(f"downsample must be in 1..{MAX_DOWNSAMPLE}, got {self.downsample}")

    @property
    def lossless(self) -> bool:
        return self.codec is not LayerCodec.DOWNQ

    @classmethod
    def downq_for_sigma(cls, sigma: float, quant_bits: int = None) -> "CodecParams":
        """Blurred content has bandwidth proportional to 1/sigma."""
        downsample = int(min(max(int(sigma // 2), 1), MAX_DOWNSAMPLE))
        return cls(LayerCodec.DOWNQ, quant_bits or config.DEFAULT_QUANT_BITS, downsample)


@dataclass(frozen=True)
class PayloadHeader:
    codec: LayerCodec
    planes: int
    sample_bytes: int
    quant_bits: int
    downsample: int
    width: int
    height: int


def _sample_bytes(arr: np.ndarray) -> int:
    lo, hi = int(arr.min()), int(arr.max())
    if 0 <= lo and hi <= 255:
        return 1
    if -32768 <= lo and hi <= 32767:
        return 2
    raise ParameterError(f"samples {lo}..{hi} exceed the 16-bit residual range")


def _predict_left(arr: np.ndarray, sample_bytes: int) -> bytes:
    residual = arr.astype(np.int64)
    residual[..., 1:] = residual[..., 1:] - arr[..., :-1]
    modulus = 1 << (8 * sample_bytes)
    dtype = np.uint8 if sample_bytes == 1 else np.dtype('<u2')
    return (residual % modulus).astype(dtype).tobytes()


def _unpredict_left(data: bytes, shape: Tuple[int, ...], sample_bytes: int) -> np.ndarray:
    dtype = np.uint8 if sample_bytes == 1 else np.dtype('<u2')
    residual = np.frombuffer(data, dtype=dtype).astype(np.int64).reshape(shape)
    modulus = 1 << (8 * sample_bytes)
    values = np.cumsum(residual, axis=-1) % modulus
    if sample_bytes == 2:
        values = np.where(values >= 32768, values - 65536, values)
    return values


def _quantize(values: np.ndarray, quant_bits: int) -> np.ndarray:
    step = 1 << (8 - quant_bits)
    half = 1 << (quant_bits - 1)
    q = np.clip(np.rint((values - MID_GREY) / step), -half, half - 1)
    return (q + half).astype(np.uint8)


def _dequantize(codes: np.ndarray, quant_bits: int) -> np.ndarray:
    step = 1 << (8 - quant_bits)
    half = 1 << (quant_bits - 1)
    return np.clip(MID_GREY + (codes.astype(np.float64) - half) * step, 0, 255)


def _deflate(raw: bytes) -> bytes:
    return zlib.compress(raw, config.DEFLATE_LEVEL)


def _inflate(body: bytes, expected: int, layer_index: Optional[int]) -> bytes:
    try:
        raw = zlib.decompress(body)
    except zlib.error as e:
        raise LayerDecodeError(f"corrupt deflate stream: {e}", layer_index)
    if len(raw) != expected:
        raise LayerDecodeError(f"decoded {len(raw)} bytes, expected {expected}", layer_index)
    return raw


def encode_planes(planes: Sequence[Plane], params: CodecParams) -> bytes:
    """Encode one or more same-shape planes into a single payload."""
    planes = tuple(planes)
    if not planes:
        raise ParameterError("nothing to encode")
    stack = np.stack([p.samples for p in planes])
    count, height, width = stack.shape

    if params.codec is LayerCodec.DOWNQ:
        reduced = np.stack([box_downsample(np.clip(c, 0, 255), params.downsample) for c in stack])
        codes = _quantize(reduced, params.quant_bits)
        body = _deflate(_predict_left(codes, 1))
        header = _HEADER.pack(params.codec, count, 1, params.quant_bits, params.downsample, width, height)
    else:
        sample_bytes = _sample_bytes(stack)
        if params.codec is LayerCodec.RAW:
            dtype = np.uint8 if sample_bytes == 1 else np.dtype('<i2')
            body = stack.astype(dtype).tobytes()
        else:
            body = _deflate(_predict_left(stack, sample_bytes))
        header = _HEADER.pack(params.codec, count, sample_bytes, 8 * sample_bytes, 1, width, height)
    return header + body


def read_header(payload: bytes, layer_index: Optional[int] = None) -> PayloadHeader:
    if len(payload) < _HEADER.size:
        raise LayerDecodeError(f"payload of {len(payload)} bytes is shorter than its header", layer_index)
    codec, planes, sample_bytes, quant_bits, downsample, width, height = _HEADER.unpack_from(payload)
    try:
        codec = LayerCodec(codec)
    except ValueError:
        raise LayerDecodeError(f"unknown codec id {codec}", layer_index)
    if planes < 1 or sample_bytes not in (1, 2) or width < 1 or height < 1 or downsample < 1:
        raise LayerDecodeError("inconsistent payload header", layer_index)
    if codec is LayerCodec.DOWNQ and not 1 <= quant_bits <= 8:
        raise LayerDecodeError(f"invalid quant_bits {quant_bits}", layer_index)
    return PayloadHeader(codec, planes, sample_bytes, quant_bits, downsample, width, height)


def decode_planes(payload: bytes, layer_index: Optional[int] = None) -> Tuple[Plane, ...]:
    header = read_header(payload, layer_index)
    body = payload[_HEADER.size:]
    shape = (header.planes, header.height, header.width)

    if header.codec is LayerCodec.DOWNQ:
        d = header.downsample
        small = (header.planes, -(-header.height // d), -(-header.width // d))
        codes = _unpredict_left(_inflate(body, int(np.prod(small)), layer_index), small, 1)
        levels = _dequantize(codes, header.quant_bits)
        full = np.stack([resample_linear(c, shape[1:]) for c in levels])
        values = np.clip(np.rint(full), 0, 255)
    elif header.codec is LayerCodec.RAW:
        expected = int(np.prod(shape)) * header.sample_bytes
        if len(body) != expected:
            raise LayerDecodeError(f"raw body has {len(body)} bytes, expected {expected}", layer_index)
        dtype = np.uint8 if header.sample_bytes == 1 else np.dtype('<i2')
        values = np.frombuffer(body, dtype=dtype).reshape(shape)
    else:
        expected = int(np.prod(shape)) * header.sample_bytes
        values = _unpredict_left(_inflate(body, expected, layer_index), shape, header.sample_bytes)

    return tuple(Plane(c) for c in values)


def layer_encode(p: Plane, codec_id=LayerCodec.DEFLATE, quant_bits: int = 8, downsample: int = 1) -> bytes:
    return encode_planes((p,), CodecParams(LayerCodec.parse(codec_id), quant_bits, downsample))


def layer_decode(payload: bytes, layer_index: Optional[int] = None) -> Plane:
    planes = decode_planes(payload, layer_index)
    if len(planes) != 1:
        raise LayerDecodeError(f"expected a single-plane payload, found {len(planes)} planes", layer_index)
    return planes[0]
