"""
One-dimensional variant of the blur stack: sampled series (audio-like)
run through the same blur, compress, subtract loop as images.

A signal is stored as a height-1 single-channel stack with the domain
byte set, so the container layout, layer codecs and reconstruction are
shared with the 2-D codec. PCM input of any integer range is mapped
affinely into 0..255 first; the map is kept in the container trailer.
"""

import logging
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from errors import ParameterError, SignalFormatError
from pnm_io import atomic_write
from scale_space import blur1d
from stack_codec import (BlurStack, Domain, EncoderConfig, SignalMeta, encode_array,
                         encode_with_tolerance, reconstruct_array)

logger = logging.getLogger(__name__)

SIDECAR_SUFFIX = ".meta"


@dataclass(frozen=True, eq=False)
class Signal1D:
    samples: np.ndarray
    sample_rate: int = 0
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.int64, copy=True)
        if arr.ndim != 1:
            raise ParameterError(f"signal samples must be 1-D, got shape {arr.shape}")
        if arr.size < 2:
            raise ParameterError(f"a signal needs at least 2 samples, got {arr.size}")
        if not self.scale > 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return int(self.samples.size)

    def __eq__(self, other):
        if not isinstance(other, Signal1D):
            return NotImplemented
        return (np.array_equal(self.samples, other.samples) and self.sample_rate == other.sample_rate
                and self.scale == other.scale and self.offset == other.offset)

    def to_pcm(self) -> np.ndarray:
        return denormalize(self.samples, self.scale, self.offset)

    @classmethod
    def from_pcm(cls, pcm: np.ndarray, sample_rate: int = 0) -> "Signal1D":
        samples, scale, offset = normalize_pcm(pcm)
        return cls(samples, sample_rate, scale, offset)


def normalize_pcm(pcm: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Affine map of integer samples into 0..255; returns (samples, scale, offset) with x = v / scale + offset."""
    x = np.asarray(pcm, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError(f"expected a non-empty vector, got shape {x.shape}")
    lo, hi = float(x.min()), float(x.max())
    if 0 <= lo and hi <= 255 and np.array_equal(x, np.rint(x)):
        return x.astype(np.int64), 1.0, 0.0
    if hi == lo:
        return np.full(x.size, 128, dtype=np.int64), 1.0, lo - 128.0
    scale = 255.0 / (hi - lo)
    return np.clip(np.rint((x - lo) * scale), 0, 255).astype(np.int64), scale, lo


def denormalize(samples: np.ndarray, scale: float, offset: float) -> np.ndarray:
    return np.rint(np.asarray(samples, dtype=np.float64) / scale + offset).astype(np.int64)


def blur_rows(work: np.ndarray, sigma: float) -> np.ndarray:
    """Blur each row of a (C, 1, L) working array along its length."""
    return np.stack([np.stack([blur1d(row, sigma) for row in channel]) for channel in work])


def encode1d(signal: Signal1D, cfg: EncoderConfig = None) -> BlurStack:
    """Decompose a signal; the default schedule starts at length / 2."""
    cfg = cfg or EncoderConfig()
    if signal.samples.min() < 0 or signal.samples.max() > 255:
        raise ParameterError("signal samples must be in 0..255, normalize PCM input first")
    work = signal.samples.reshape(1, 1, -1).astype(np.int32)
    schedule = cfg.resolve_schedule(len(signal), 1)
    meta = SignalMeta(signal.scale, signal.offset, signal.sample_rate)
    stack = encode_with_tolerance(
        work, cfg, schedule,
        lambda s: encode_array(work, cfg, s, domain=Domain.SIGNAL, signal_meta=meta, blur=blur_rows),
    )
    logger.info(f"Encoded {len(signal)}-sample signal into {stack.layer_count} layers")
    return stack


def decode1d(stack: BlurStack, num_workers: int = 1) -> Signal1D:
    if stack.height != 1 or stack.channels != 1:
        raise ParameterError(f"not a signal stack: {stack.channels} channels, height {stack.height}")
    samples = np.clip(reconstruct_array(stack, num_workers)[0, 0], 0, 255)
    meta = stack.signal_meta or SignalMeta()
    return Signal1D(samples, meta.sample_rate, meta.scale, meta.offset)


def sidecar_path(path: str) -> str:
    return path + SIDECAR_SUFFIX


def read_signal_file(path: str) -> Signal1D:
    """Headerless 8-bit samples plus the optional one-line sidecar."""
    with open(path, 'rb') as f:
        samples = np.frombuffer(f.read(), dtype=np.uint8)
    meta = {'length': len(samples), 'sample_rate': 0, 'scale': 1.0, 'offset': 0.0}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side, 'r') as f:
            meta.update(_parse_sidecar(f.read()))
    if meta['length'] != len(samples):
        raise SignalFormatError(f"sidecar says {meta['length']} samples, {path} holds {len(samples)}")
    return Signal1D(samples, meta['sample_rate'], meta['scale'], meta['offset'])


def _parse_sidecar(text: str) -> dict:
    fields = {}
    casts = {'length': int, 'sample_rate': int, 'scale': float, 'offset': float}
    for token in text.split():
        key, sep, value = token.partition('=')
        if not sep or key not in casts:
            raise SignalFormatError(f"unexpected sidecar token '{token}'")
        try:
            fields[key] = casts[key](value)
        except ValueError:
            raise SignalFormatError(f"invalid value for {key}: '{value}'")
    return fields


def format_sidecar(signal: Signal1D) -> str:
    return (f"length={len(signal)} sample_rate={signal.sample_rate} "
            f"scale={signal.scale!r} offset={signal.offset!r}\n")


def write_signal_file(path: str, signal: Signal1D, sidecar: bool = True) -> None:
    atomic_write(path, np.clip(signal.samples, 0, 255).astype(np.uint8).tobytes())
    if sidecar:
        atomic_write(sidecar_path(path), format_sidecar(signal).encode('ascii'))
