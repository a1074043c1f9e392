"""
GBS1 container: the bit-exact on-disk form of a BlurStack.

All integers are little-endian.

    header   "GBS1" u16 version u8 channels u8 channel_mode u8 residual_mode
             u32 width u32 height u64 seed u16 layer_count u8 domain
    layer    f32 sigma u16 spread_radius u8 codec u8 quant_bits u16 downsample
             then per payload: u32 length, payload, u32 crc32
    base     u8 codec u8 greyscale then per payload: u32 length, payload, u32 crc32
    trailer  (signal domain only) f64 scale f64 offset u32 sample_rate u32 crc32

Joint stacks carry one payload per record; per-channel stacks carry
`channels` consecutive payloads (a greyscale base always carries one).
Layers are stored in extraction order so a streaming reader can render
top-down frames as records arrive.
"""

import logging
import struct
import zlib
from typing import List, Tuple

from errors import (BadMagicError, ChecksumError, ContainerFormatError, LayerDecodeError,
                    ParameterError, TruncatedContainerError, VersionMismatchError)
from layer_codecs import LayerCodec, read_header
from stack_codec import (BaseRecord, BlurLayer, BlurStack, ChannelMode, Domain,
                         ResidualMode, SignalMeta)

logger = logging.getLogger(__name__)

MAGIC = b"GBS1"
VERSION = 1

_HEADER = struct.Struct('<4sHBBBIIQHB')
_LAYER = struct.Struct('<fHBBH')
_BASE = struct.Struct('<BB')
_TRAILER = struct.Struct('<ddI')
_U32 = struct.Struct('<I')


def _crc(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def _pack_payload(payload: bytes) -> bytes:
    return _U32.pack(len(payload)) + payload + _U32.pack(_crc(payload))


def layer_record_size(layer: BlurLayer) -> int:
    """Bytes the layer occupies in the container, framing included."""
    return _LAYER.size + sum(8 + len(p) for p in layer.payloads)


def base_record_size(base: BaseRecord) -> int:
    return _BASE.size + sum(8 + len(p) for p in base.payloads)


def serialize(stack: BlurStack) -> bytes:
    out = [_HEADER.pack(MAGIC, VERSION, stack.channels, stack.channel_mode, stack.residual_mode,
                        stack.width, stack.height, stack.seed, stack.layer_count, stack.domain)]
    for layer in stack.layers:
        out.append(_LAYER.pack(layer.sigma, layer.spread_radius, layer.codec_id,
                               layer.quant_bits, layer.downsample))
        out.extend(_pack_payload(p) for p in layer.payloads)
    out.append(_BASE.pack(stack.base.codec_id, int(stack.base.greyscale)))
    out.extend(_pack_payload(p) for p in stack.base.payloads)
    if stack.domain is Domain.SIGNAL:
        meta = stack.signal_meta or SignalMeta()
        body = _TRAILER.pack(meta.scale, meta.offset, meta.sample_rate)
        out.append(body + _U32.pack(_crc(body)))
    data = b"".join(out)
    logger.debug(f"Serialized {stack.layer_count}-layer stack to {len(data)} bytes")
    return data


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            raise TruncatedContainerError(
                f"truncated {what}: need {size} bytes, {len(self.data) - self.pos} left", self.pos)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: struct.Struct, what: str) -> Tuple:
        return fmt.unpack(self.take(fmt.size, what))

    def payload(self, record: str) -> bytes:
        start = self.pos
        (length,) = self.unpack(_U32, f"{record} length")
        payload = self.take(length, record)
        (crc,) = self.unpack(_U32, f"{record} checksum")
        if crc != _crc(payload):
            raise ChecksumError(record, start)
        return payload


def _check_dimensions(payload: bytes, stack_shape: Tuple[int, int], record: str, offset: int,
                      layer_index=None) -> int:
    try:
        header = read_header(payload, layer_index)
    except LayerDecodeError as e:
        raise ContainerFormatError(f"{record}: {e}", offset)
    if (header.width, header.height) != stack_shape:
        raise ContainerFormatError(
            f"{record} is {header.width}x{header.height}, header says {stack_shape[0]}x{stack_shape[1]}", offset)
    return header.planes


def deserialize(data: bytes) -> BlurStack:
    """Parse a GBS1 container; every format problem raises a ContainerFormatError subclass."""
    reader = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", 0)
    (_, version, channels, channel_mode, residual_mode, width, height,
     seed, layer_count, domain) = reader.unpack(_HEADER, "header")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported container version {version}, expected {VERSION}", 4)
    try:
        channel_mode, residual_mode, domain = ChannelMode(channel_mode), ResidualMode(residual_mode), Domain(domain)
    except ValueError as e:
        raise ContainerFormatError(f"invalid header field: {e}", 4)
    if channels not in (1, 3) or width < 1 or height < 1 or layer_count < 1:
        raise ContainerFormatError(
            f"invalid header: {channels} channels, {width}x{height}, {layer_count} layers", 4)

    per_record = channels if channel_mode is ChannelMode.PER_CHANNEL else 1
    layers: List[BlurLayer] = []
    for index in range(1, layer_count + 1):
        record = f"layer {index}"
        offset = reader.pos
        sigma, radius, codec_id, quant_bits, downsample = reader.unpack(_LAYER, record)
        try:
            codec_id = LayerCodec(codec_id)
        except ValueError:
            raise ContainerFormatError(f"{record}: unknown codec id {codec_id}", offset)
        payloads = tuple(reader.payload(record) for _ in range(per_record))
        planes = sum(_check_dimensions(p, (width, height), record, offset, index) for p in payloads)
        if planes != channels:
            raise ContainerFormatError(f"{record} holds {planes} planes for {channels} channels", offset)
        layers.append(BlurLayer(float(sigma), radius, codec_id, quant_bits, downsample, payloads, index=index))

    offset = reader.pos
    base_codec, greyscale = reader.unpack(_BASE, "base")
    try:
        base_codec = LayerCodec(base_codec)
    except ValueError:
        raise ContainerFormatError(f"base: unknown codec id {base_codec}", offset)
    base_count = 1 if greyscale else per_record
    base_payloads = tuple(reader.payload("base") for _ in range(base_count))
    planes = sum(_check_dimensions(p, (width, height), "base", offset) for p in base_payloads)
    if planes != (1 if greyscale else channels):
        raise ContainerFormatError(f"base holds {planes} planes for {channels} channels", offset)
    base = BaseRecord(base_codec, bool(greyscale), base_payloads)

    signal_meta = None
    if domain is Domain.SIGNAL:
        offset = reader.pos
        body = reader.take(_TRAILER.size, "signal trailer")
        (crc,) = reader.unpack(_U32, "signal trailer checksum")
        if crc != _crc(body):
            raise ChecksumError("signal trailer", offset)
        scale, shift, sample_rate = _TRAILER.unpack(body)
        signal_meta = SignalMeta(scale, shift, sample_rate)

    if reader.pos != len(data):
        raise ContainerFormatError(f"{len(data) - reader.pos} trailing bytes after the stack", reader.pos)
    try:
        return BlurStack(width, height, channels, channel_mode, residual_mode, seed,
                         tuple(layers), base, domain, signal_meta)
    except ParameterError as e:
        raise ContainerFormatError(str(e), 0)


def read_container(path: str) -> BlurStack:
    with open(path, 'rb') as f:
        return deserialize(f.read())
