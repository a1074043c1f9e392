"""
Tests for the self-contained layer payload codecs.
"""

import struct

import numpy as np
import pytest

from errors import LayerDecodeError, ParameterError
from layer_codecs import (CodecParams, LayerCodec, decode_planes, encode_planes, layer_decode, layer_encode,
                          read_header)
from raster import Plane, RasterImage, psnr
from scale_space import gaussian_blur
from tests.synthetic import synthetic_photo

HEADER = struct.Struct('<BBBBHII')


class TestRawCodec:
    """Test the uncompressed codec."""

    def test_exact_bytes(self):
        payload = layer_encode(Plane.from_list(2, 2, [1, 2, 3, 4]), LayerCodec.RAW)
        assert payload == HEADER.pack(0, 1, 1, 8, 1, 2, 2) + bytes([1, 2, 3, 4])

    def test_wide_samples(self):
        p = Plane.from_list(3, 1, [-200, 0, 300])
        payload = layer_encode(p, "raw")
        assert read_header(payload).sample_bytes == 2
        assert layer_decode(payload) == p

    def test_wrong_body_length(self):
        payload = layer_encode(Plane.full(2, 2, 5), LayerCodec.RAW)
        with pytest.raises(LayerDecodeError, match="layer 3"):
            layer_decode(payload[:-1], layer_index=3)


class TestDeflateCodec:
    """Test the left-predicted deflate codec."""

    def test_bit_exact_bytes(self):
        rng = np.random.default_rng(4)
        p = Plane(rng.integers(0, 256, size=(17, 23)))
        assert layer_decode(layer_encode(p)) == p

    def test_bit_exact_16_bit_residuals(self):
        rng = np.random.default_rng(5)
        p = Plane(rng.integers(-255, 511, size=(9, 12)))
        payload = layer_encode(p, LayerCodec.DEFLATE)
        assert read_header(payload).sample_bytes == 2
        assert layer_decode(payload) == p

    def test_flat_layer_is_tiny(self):
        assert len(layer_encode(Plane.full(256, 256, 128))) < 200

    def test_corrupt_stream(self):
        payload = bytearray(layer_encode(Plane.full(8, 8, 128)))
        payload[HEADER.size:] = b"\x00" * (len(payload) - HEADER.size)
        with pytest.raises(LayerDecodeError) as exc:
            layer_decode(bytes(payload), layer_index=2)
        assert exc.value.layer_index == 2

    def test_multi_plane_payload(self, small_rgb):
        payload = encode_planes(small_rgb.planes, CodecParams())
        assert read_header(payload).planes == 3
        assert decode_planes(payload) == small_rgb.planes
        with pytest.raises(LayerDecodeError, match="single-plane"):
            layer_decode(payload)


class TestDownQuantizedCodec:
    """Test the downsample-and-quantize codec."""

    def test_constant_mid_grey_is_preserved(self):
        payload = layer_encode(Plane.full(40, 30, 128), LayerCodec.DOWNQ, quant_bits=4, downsample=8)
        assert layer_decode(payload) == Plane.full(40, 30, 128)

    def test_quantizer_error_bound(self):
        values = Plane.from_list(8, 1, [0, 60, 100, 127, 128, 129, 200, 255])
        decoded = layer_decode(layer_encode(values, LayerCodec.DOWNQ, quant_bits=6, downsample=1))
        assert np.abs(decoded.samples - values.samples).max() <= 4

    def test_blurred_image_size_and_quality(self):
        photo = synthetic_photo(256)
        blurred = RasterImage.from_planes([gaussian_blur(p, 30) for p in photo.planes])
        params = CodecParams.downq_for_sigma(30)
        assert params.downsample == 15
        payload = encode_planes(blurred.planes, params)
        decoded = RasterImage.from_planes(decode_planes(payload))
        assert len(payload) < 0.02 * 3 * 256 * 256
        assert psnr(blurred, decoded) >= 30.0

    def test_header_records_parameters(self):
        header = read_header(layer_encode(Plane.full(10, 10, 1), "downq", quant_bits=5, downsample=4))
        assert header.codec is LayerCodec.DOWNQ
        assert (header.quant_bits, header.downsample, header.width, header.height) == (5, 4, 10, 10)

    @pytest.mark.parametrize("bits,down", [(0, 1), (9, 1), (6, 0), (6, 33)])
    def test_invalid_parameters(self, bits, down):
        with pytest.raises(ParameterError):
            CodecParams(LayerCodec.DOWNQ, bits, down)


class TestHeaders:
    """Test payload header validation."""

    def test_short_payload(self):
        with pytest.raises(LayerDecodeError, match="shorter than its header"):
            read_header(b"\x01\x01")

    def test_unknown_codec(self):
        with pytest.raises(LayerDecodeError, match="unknown codec"):
            read_header(HEADER.pack(7, 1, 1, 8, 1, 2, 2))

    def test_codec_parse(self):
        assert LayerCodec.parse("deflate") is LayerCodec.DEFLATE
        assert LayerCodec.parse(2) is LayerCodec.DOWNQ
        with pytest.raises(ParameterError):
            LayerCodec.parse("jpeg")
