"""Overlay/heatmap rendering and PNG round trips."""

import numpy as np
import pytest

from mlfr.render import (

    OverlaySpec,
    adapt_channels,
    labels_to_image,
    load_image,
    render_heatmap,
    render_overlay,
    save_image,
)
from mlfr.segmentation import SegmentLabels


class TestImageIO:
    @pytest.mark.parametrize("channels", [1, 3])
    def test_png_round_trip_is_exact(self, rng, tmp_path, channels):
        raw = rng.integers(0, 256, size=(channels, 9, 7), dtype=np.uint8)
        image = raw / 255.0
        path = tmp_path / "img.png"
        save_image(image, path)
        back = load_image(path)
        np.testing.assert_array_equal(np.rint(back * 255).astype(np.uint8), raw)

    def test_rgba_alpha_dropped(self, tmp_path):
        from PIL import Image

        arr = np.zeros((4, 4, 4), dtype=np.uint8)
        arr[..., 0] = 200
        arr[..., 3] = 128
        Image.fromarray(arr, mode="RGBA").save(tmp_path / "a.png")
        image = load_image(tmp_path / "a.png")
        assert image.shape == (3, 4, 4)

    def test_grayscale_loads_single_channel(self, tmp_path):
        from PIL import Image

        Image.fromarray(np.zeros((5, 6), dtype=np.uint8), mode="L").save(tmp_path / "g.png")
        assert load_image(tmp_path / "g.png").shape == (1, 5, 6)


class TestAdaptChannels:
    def test_gray_replicated(self, rng):
        img = rng.random((1, 4, 4))
        out = adapt_channels(img, 3)
        assert out.shape == (3, 4, 4)
        np.testing.assert_array_equal(out[0], out[2])

    def test_rgb_to_luminance(self, rng):
        img = rng.random((3, 4, 4))
        out = adapt_channels(img, 1)
        assert out.shape == (1, 4, 4)
        assert out.min() >= 0 and out.max() <= 1

    def test_identity(self, rng):
        img = rng.random((3, 4, 4))
        assert adapt_channels(img, 3) is img

    def test_unsupported_combination(self, rng):
        with pytest.raises(ValueError):
            adapt_channels(rng.random((4, 2, 2)), 3)


class TestOverlay:
    def test_selected_pixels_bit_identical(self, rng):
        image = rng.random((3, 8, 8))
        mask = np.zeros((8, 8), dtype=bool)
        mask[2:5, 3:7] = True
        out = render_overlay(image, mask, OverlaySpec(top_k=1, dim_factor=0.25))
        np.testing.assert_array_equal(out[:, mask], image[:, mask])
        np.testing.assert_array_equal(out[:, ~mask], image[:, ~mask] * 0.25)

    def test_full_mask_returns_original(self, rng):
        image = rng.random((3, 6, 6))
        out = render_overlay(image, np.ones((6, 6), dtype=bool), OverlaySpec(top_k=1))
        np.testing.assert_array_equal(out, image)

    def test_outline_marks_border_outside_selection(self, rng):
        image = np.full((3, 8, 8), 0.5)
        mask = np.zeros((8, 8), dtype=bool)
        mask[3:5, 3:5] = True
        out = render_overlay(image, mask, OverlaySpec(top_k=1, dim_factor=0.0, outline=True))
        np.testing.assert_array_equal(out[:, mask], image[:, mask])
        assert out[0, 2, 3] == 1.0  # border pixel highlighted
        assert out[0, 0, 0] == 0.0  # far pixel dimmed to zero

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            OverlaySpec(top_k=0)
        with pytest.raises(ValueError):
            OverlaySpec(dim_factor=1.5)


class TestHeatmap:
    def test_zero_relevance_is_white(self):
        values = np.zeros((4, 4))
        values[0, 0] = 1.0
        hm = render_heatmap(values)
        np.testing.assert_array_equal(hm[:, 1, 1], [1.0, 1.0, 1.0])

    def test_positive_red_negative_blue(self):
        values = np.array([[1.0, -1.0]])
        hm = render_heatmap(values)
        np.testing.assert_array_equal(hm[:, 0, 0], [1.0, 0.0, 0.0])
        np.testing.assert_array_equal(hm[:, 0, 1], [0.0, 0.0, 1.0])

    def test_symmetric_normalization_by_max_abs(self):
        values = np.array([[2.0, -4.0]])
        hm = render_heatmap(values)
        # +2 out of max |r| = 4 -> half-saturated red
        np.testing.assert_allclose(hm[:, 0, 0], [1.0, 0.5, 0.5])
        np.testing.assert_array_equal(hm[:, 0, 1], [0.0, 0.0, 1.0])

    def test_all_zero_map_is_all_white(self):
        hm = render_heatmap(np.zeros((3, 3)))
        np.testing.assert_array_equal(hm, np.ones((3, 3, 3)))


class TestLabelRendering:
    def test_distinct_gray_levels_for_small_m(self):
        labels = SegmentLabels(labels=np.array([[0, 1], [2, 3]]), segment_count=4)
        img = labels_to_image(labels)
        values = set(np.rint(img.reshape(-1) * 255).astype(int).tolist())
        assert len(values) == 4

    def test_single_segment_black(self):
        labels = SegmentLabels(labels=np.zeros((2, 2), dtype=int), segment_count=1)
        np.testing.assert_array_equal(labels_to_image(labels), np.zeros((1, 2, 2)))
