import numpy as np
import pytest

from griddet.boxes import Box
from griddet.features import (BoxOutsideImageError, ExtractorConfig,
                              FeatureExtractor, FeatureMap,
                              build_roi_features, compute_global_features,
                              roi_pool)


def reference_features(image):
    """Scalar reference for the default extractor: intensity + central
    differences (one-sided at the borders)."""
    h, w = image.shape
    gx = np.zeros_like(image)
    gy = np.zeros_like(image)
    for y in range(h):
        for x in range(w):
            if 0 < x < w - 1:
                gx[y, x] = (image[y, x + 1] - image[y, x - 1]) / 2
            elif x == 0:
                gx[y, x] = image[y, 1] - image[y, 0] if w > 1 else 0
            else:
                gx[y, x] = image[y, -1] - image[y, -2]
            if 0 < y < h - 1:
                gy[y, x] = (image[y + 1, x] - image[y - 1, x]) / 2
            elif y == 0:
                gy[y, x] = image[1, x] - image[0, x] if h > 1 else 0
            else:
                gy[y, x] = image[-1, x] - image[-2, x]
    return np.stack([image, gx, gy])


def test_constant_image_has_zero_gradients():
    fm = compute_global_features(np.zeros((8, 8)))
    assert fm.channels == 3
    assert np.all(fm.data[1] == 0)
    assert np.all(fm.data[2] == 0)


def test_ramp_image_unit_horizontal_gradient():
    image = np.tile(np.arange(16, dtype=float), (3, 1))
    fm = compute_global_features(image)
    assert np.allclose(fm.data[1][:, 1:-1], 1.0)
    assert np.allclose(fm.data[2], 0.0)


def test_matches_scalar_reference_on_fixed_image():
    rng = np.random.default_rng(42)
    image = rng.uniform(0, 1, size=(8, 8))
    fm = compute_global_features(image)
    assert np.allclose(fm.data, reference_features(image), atol=1e-12)


def test_extra_filter_channels():
    cfg = ExtractorConfig(extra_filters=(((0.25, 0.25), (0.25, 0.25)),))
    fm = compute_global_features(np.ones((6, 6)), cfg)
    assert fm.channels == 4
    assert np.allclose(fm.data[3], 1.0)


def test_call_counter_increments():
    ext = FeatureExtractor()
    image = np.zeros((4, 4))
    assert ext.call_count == 0
    ext.compute_global_features(image)
    ext.compute_global_features(image)
    assert ext.call_count == 2


def test_roi_pool_single_cell():
    data = np.arange(16, dtype=float).reshape(1, 4, 4)
    fm = FeatureMap(data)
    v = roi_pool(fm, Box.from_corners(1, 2, 2, 3), pool_h=1, pool_w=1)
    assert v.shape == (1,)
    assert v[0] == data[0, 2, 1]


def test_roi_pool_uniform_image():
    fm = FeatureMap(np.full((2, 10, 10), 3.5))
    v = roi_pool(fm, Box.from_corners(1, 1, 8, 9), pool_h=3, pool_w=3)
    assert np.all(v == 3.5)


def test_roi_pool_2x2_hand_enumeration():
    data = np.arange(1, 17, dtype=float).reshape(1, 4, 4)
    fm = FeatureMap(data)
    v = roi_pool(fm, Box.from_corners(0, 0, 4, 4), pool_h=2, pool_w=2)
    assert v.tolist() == [6, 8, 14, 16]


def test_roi_pool_outside_raises():
    fm = FeatureMap(np.zeros((1, 4, 4)))
    with pytest.raises(BoxOutsideImageError):
        roi_pool(fm, Box(10, 10, 2, 2))


def test_roi_pool_length_constant():
    rng = np.random.default_rng(1)
    fm = FeatureMap(rng.uniform(size=(3, 20, 20)))
    sizes = set()
    for _ in range(10):
        b = Box(*rng.uniform(2, 18, 2), *rng.uniform(0.5, 15, 2))
        sizes.add(roi_pool(fm, b).shape)
    assert sizes == {(3 * 6 * 6,)}


def test_roi_pool_monotone_under_nesting():
    rng = np.random.default_rng(9)
    for _ in range(20):
        fm = FeatureMap(rng.uniform(size=(2, 12, 12)))
        full = roi_pool(fm, Box.from_corners(0, 0, 12, 12), 2, 2)
        half = roi_pool(fm, Box.from_corners(0, 0, 6, 6), 1, 1)
        # The half-image box nests inside the full image: its single-bin max
        # cannot exceed the max over all full-image bins, per channel.
        full_c = full.reshape(2, 4).max(axis=1)
        assert np.all(half <= full_c + 1e-15)


def test_build_roi_features_appends_coords():
    fm = FeatureMap(np.zeros((3, 10, 10)))
    cfg = ExtractorConfig()
    feats = build_roi_features(fm, [Box(5, 5, 4, 2)], cfg)
    assert feats.shape == (1, cfg.feature_dim)
    assert feats[0, -4:].tolist() == [0.5, 0.5, 0.4, 0.2]


def test_subpixel_box_pools_zeros():
    fm = FeatureMap(np.ones((1, 10, 10)))
    v = roi_pool(fm, Box(5.5, 5.5, 0.1, 0.1), 2, 2)
    # A sub-pixel box still covers one cell after floor/ceil discretization.
    assert v.shape == (4,)
