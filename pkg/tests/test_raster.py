"""Grayscale conversion, resizing, and image IO."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.raster import (
    ImageGray,
    crop_resize,
    load_image,
    resize,
    save_png,
    to_grayscale,
)
from reference_impls import reference_resize_area, reference_resize_bilinear

from conftest import random_image


def rgb_pixel(r, g, b):
    return np.array([[[r, g, b]]], dtype=np.uint8)


class TestImageGray:
    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidInputError):
            ImageGray(np.array([[0.5, 1.5]]))
        with pytest.raises(InvalidInputError):
            ImageGray(np.array([[-0.1, 0.5]]))

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            ImageGray(np.array([[np.nan, 0.5]]))

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            ImageGray(np.zeros((0, 4)))

    def test_dimensions(self):
        img = ImageGray(np.zeros((3, 5)))
        assert (img.height, img.width) == (3, 5)


class TestToGrayscale:
    def test_white_is_one(self):
        assert to_grayscale(rgb_pixel(255, 255, 255)).pixels[0, 0] == pytest.approx(
            1.0, abs=1e-12
        )

    def test_black_is_zero(self):
        assert to_grayscale(rgb_pixel(0, 0, 0)).pixels[0, 0] == 0.0

    def test_pure_red(self):
        assert to_grayscale(rgb_pixel(255, 0, 0)).pixels[0, 0] == pytest.approx(
            0.299, abs=1e-12
        )

    def test_weights(self):
        assert to_grayscale(rgb_pixel(0, 255, 0)).pixels[0, 0] == pytest.approx(0.587)
        assert to_grayscale(rgb_pixel(0, 0, 255)).pixels[0, 0] == pytest.approx(0.114)

    def test_zero_dimension_rejected(self):
        with pytest.raises(InvalidInputError):
            to_grayscale(np.zeros((0, 3, 3), dtype=np.uint8))

    def test_wrong_channel_count_rejected(self):
        with pytest.raises(InvalidInputError):
            to_grayscale(np.zeros((2, 2, 4), dtype=np.uint8))


class TestResize:
    def test_constant_stays_constant(self):
        img = ImageGray(np.full((7, 5), 0.371))
        for method in ("area", "bilinear"):
            out = resize(img, 3, 11, method=method)
            assert (out.width, out.height) == (3, 11)
            assert np.allclose(out.pixels, 0.371, atol=1e-12)

    def test_integral_area_resize_is_block_mean(self):
        values = np.arange(16, dtype=np.float64).reshape(4, 4) / 16.0
        out = resize(ImageGray(values), 2, 2, method="area")
        expected = values.reshape(2, 2, 2, 2).mean(axis=(1, 3))
        np.testing.assert_allclose(out.pixels, expected, atol=1e-12)

    def test_bilinear_ramp_matches_reference(self):
        ramp = np.add.outer(np.arange(32), np.arange(32)) / 62.0
        out = resize(ImageGray(ramp), 8, 8, method="bilinear")
        expected = reference_resize_bilinear(ramp, 8, 8)
        np.testing.assert_allclose(out.pixels, expected, atol=1e-9)

    def test_area_matches_reference_non_integral(self, rng):
        img = random_image(rng, 37)
        out = resize(img, 8, 8, method="area")
        expected = reference_resize_area(img.pixels, 8, 8)
        np.testing.assert_allclose(out.pixels, expected, atol=1e-9)

    def test_zero_target_rejected(self):
        img = ImageGray(np.zeros((4, 4)))
        with pytest.raises(InvalidInputError):
            resize(img, 0, 4)
        with pytest.raises(InvalidInputError):
            resize(img, 4, 0)

    def test_unknown_method_rejected(self):
        with pytest.raises(InvalidInputError):
            resize(ImageGray(np.zeros((4, 4))), 2, 2, method="nearest")

    @given(
        in_w=st.integers(1, 17),
        in_h=st.integers(1, 17),
        out_w=st.integers(1, 17),
        out_h=st.integers(1, 17),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_output_range_and_shape(self, in_w, in_h, out_w, out_h, seed):
        gen = np.random.default_rng(seed)
        img = ImageGray(gen.random((in_h, in_w)))
        for method in ("area", "bilinear"):
            out = resize(img, out_w, out_h, method=method)
            assert (out.height, out.width) == (out_h, out_w)
            assert np.all(out.pixels >= -1e-12)
            assert np.all(out.pixels <= 1 + 1e-12)

    def test_area_mean_preserved(self, rng):
        img = random_image(rng, 24)
        out = resize(img, 6, 6, method="area")
        assert out.pixels.mean() == pytest.approx(img.pixels.mean(), abs=1e-12)


class TestCropResize:
    def test_full_frame_crop_is_identity(self, rng):
        img = random_image(rng, 16)
        out = crop_resize(img, 0.0, 0.0, 16.0, 16.0, 16, 16)
        np.testing.assert_allclose(out.pixels, img.pixels, atol=1e-9)

    def test_empty_window_rejected(self):
        img = ImageGray(np.zeros((8, 8)))
        with pytest.raises(InvalidInputError):
            crop_resize(img, 1.0, 1.0, 0.0, 4.0, 4, 4)

    def test_window_past_edge_clamps(self):
        values = np.zeros((8, 8))
        values[:, -1] = 1.0
        out = crop_resize(ImageGray(values), 6.0, 0.0, 4.0, 8.0, 4, 8)
        assert np.all(out.pixels >= 0.0)
        assert out.pixels[:, -1].mean() > 0.9  # beyond-edge samples clamp to the last column

    def test_quadrant_crop(self):
        values = np.zeros((8, 8))
        values[:4, :4] = 1.0
        out = crop_resize(ImageGray(values), 0.0, 0.0, 4.0, 4.0, 4, 4)
        np.testing.assert_allclose(out.pixels, 1.0, atol=1e-9)


class TestImageIO:
    def test_png_roundtrip(self, tmp_path, rng):
        img = random_image(rng, 12)
        path = tmp_path / "img.png"
        save_png(img, path)
        back = load_image(path)
        np.testing.assert_allclose(back.pixels, img.pixels, atol=1 / 255 + 1e-9)

    def test_png_roundtrip_exact_on_quantized(self, tmp_path):
        levels = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
        path = tmp_path / "levels.png"
        save_png(ImageGray(levels), path)
        np.testing.assert_allclose(load_image(path).pixels, levels, atol=1e-12)

    def test_load_jpeg(self, tmp_path):
        from PIL import Image

        arr = np.full((10, 10, 3), 128, dtype=np.uint8)
        path = tmp_path / "img.jpg"
        Image.fromarray(arr).save(path, quality=95)
        img = load_image(path)
        assert (img.width, img.height) == (10, 10)
        assert abs(img.pixels.mean() - 128 / 255) < 0.05

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "absent.png")
