"""
Tests for planes, images, grain arithmetic and image metrics.
"""

import math

import numpy as np
import pytest

from errors import ShapeError
from raster import (INF, MID_GREY, Colorspace, Plane, RasterImage, grain_extract, grain_merge, luma, mse,
                    plane_stats, psnr, psnr_from_mse, to_greyscale)


class TestPlane:
    """Test plane construction and validation."""

    def test_from_list_row_major(self):
        p = Plane.from_list(2, 2, [1, 2, 3, 4])
        assert p.width == 2 and p.height == 2
        assert p.samples.tolist() == [[1, 2], [3, 4]]

    def test_samples_are_read_only_copies(self):
        source = np.zeros((2, 3), dtype=np.int32)
        p = Plane(source)
        source[0, 0] = 99
        assert p.samples[0, 0] == 0
        with pytest.raises(ValueError):
            p.samples[0, 0] = 1

    def test_rejects_empty_and_wrong_rank(self):
        with pytest.raises(ShapeError):
            Plane(np.zeros((0, 4)))
        with pytest.raises(ShapeError):
            Plane(np.zeros(4))

    def test_from_list_length_mismatch(self):
        with pytest.raises(ShapeError):
            Plane.from_list(2, 2, [1, 2, 3])

    def test_equality_and_hash(self):
        a, b = Plane.full(3, 2, 7), Plane.full(3, 2, 7)
        assert a == b and hash(a) == hash(b)
        assert a != Plane.full(3, 2, 8)


class TestRasterImage:
    """Test image containers."""

    def test_from_array_grey_and_rgb(self):
        grey = RasterImage.from_array(np.zeros((4, 5)))
        rgb = RasterImage.from_array(np.zeros((3, 4, 5)))
        assert grey.colorspace is Colorspace.GREY and grey.channels == 1
        assert rgb.colorspace is Colorspace.RGB and (rgb.width, rgb.height) == (5, 4)

    def test_plane_count_must_match_colorspace(self):
        with pytest.raises(ShapeError):
            RasterImage((Plane.full(2, 2, 0),) * 2, Colorspace.RGB)

    def test_planes_must_share_dimensions(self):
        with pytest.raises(ShapeError):
            RasterImage((Plane.full(2, 2, 0), Plane.full(2, 2, 0), Plane.full(3, 2, 0)), Colorspace.RGB)

    def test_to_array_round_trip(self, small_rgb):
        assert RasterImage.from_array(small_rgb.to_array()) == small_rgb


class TestGrainArithmetic:
    """Test grain extract and merge around mid-grey."""

    def test_extract_of_equal_planes_is_mid_grey(self):
        p = Plane.from_list(2, 2, [0, 50, 200, 255])
        assert grain_extract(p, p) == Plane.full(2, 2, MID_GREY)

    def test_extract_leaves_8_bit_range(self):
        out = grain_extract(Plane.full(1, 1, 0), Plane.full(1, 1, 255))
        assert out.samples[0, 0] == -127

    def test_merge_inverts_extract_in_wide_mode(self):
        rng = np.random.default_rng(3)
        a = Plane(rng.integers(0, 256, size=(8, 8)))
        b = Plane(rng.integers(0, 256, size=(8, 8)))
        assert grain_merge(grain_extract(a, b), b) == a

    def test_clamp8_saturates(self):
        out = grain_extract(Plane.full(1, 1, 0), Plane.full(1, 1, 255), clamp8=True)
        assert out.samples[0, 0] == 0
        out = grain_merge(Plane.full(1, 1, 255), Plane.full(1, 1, 255), clamp8=True)
        assert out.samples[0, 0] == 255

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            grain_extract(Plane.full(2, 2, 0), Plane.full(2, 3, 0))


class TestMetrics:
    """Test MSE, PSNR and plane statistics."""

    def test_psnr_identical_is_inf(self, small_rgb):
        assert psnr(small_rgb, small_rgb) == INF

    def test_psnr_known_value(self):
        a = RasterImage.from_array(np.full((4, 4), 100))
        b = RasterImage.from_array(np.full((4, 4), 110))
        assert mse(a, b) == 100.0
        assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / 100.0))

    def test_single_full_scale_error(self):
        a = np.zeros((4, 4), dtype=np.int64)
        b = a.copy()
        b[1, 2] = 255
        assert psnr(RasterImage.from_array(a), RasterImage.from_array(b)) == pytest.approx(10 * math.log10(16))

    def test_psnr_clamps_before_comparing(self):
        a = RasterImage.from_array(np.full((2, 2), 300))
        b = RasterImage.from_array(np.full((2, 2), 255))
        assert psnr(a, b) == INF

    def test_psnr_from_mse_zero(self):
        assert psnr_from_mse(0.0) == INF

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(RasterImage.from_array(np.zeros((2, 2))), RasterImage.from_array(np.zeros((3, 2, 2))))

    def test_stats_constant_mid_grey(self):
        stats = plane_stats(Plane.full(4, 4, 128))
        assert stats.mean == 128 and stats.stddev == 0 and stats.grey_deviation == 0
        assert stats.histogram[128] == 16 and sum(stats.histogram) == 16

    def test_stats_two_samples(self):
        stats = plane_stats(Plane.from_list(2, 1, [0, 255]))
        assert stats.mean == 127.5
        assert stats.grey_deviation == 127.5
        assert (stats.min, stats.max) == (0, 255)


class TestGreyscale:
    """Test Rec.601 luma conversion."""

    def test_pure_colours(self):
        image = RasterImage.from_array(np.array([[[255]], [[0]], [[0]]]))
        assert to_greyscale(image).planes[0].samples[0, 0] == 76
        assert luma(np.array([0]), np.array([255]), np.array([0]))[0] == 150
        assert luma(np.array([0]), np.array([0]), np.array([255]))[0] == 29

    def test_white_stays_white(self):
        image = RasterImage.from_array(np.full((3, 2, 2), 255))
        grey = to_greyscale(image)
        assert grey.channels == 1
        assert np.all(grey.planes[0].samples == 255)

    def test_grey_input_unchanged(self, small_grey):
        assert to_greyscale(small_grey) is small_grey
