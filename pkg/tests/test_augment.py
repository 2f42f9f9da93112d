"""Affine augmentation: identity exactness, integer-shift inverses,
scale mass conservation, parameter sampling ranges."""

import numpy as np
import pytest

from chexchain.augment import (
    AugmentParams,
    apply_affine,
    augment,
    default_augment_params,
    identity_augment_params,
    sample_transform,
)
from chexchain.errors import ConfigurationError
from chexchain.rng import substream


class TestApplyAffine:
    def test_identity_is_exact(self):
        img = substream(0, "test-augment").random((64, 64))
        out = apply_affine(img, 0.0, 0.0, 0.0, 1.0, 0.0)
        assert np.array_equal(out, img)

    def test_integer_translation_is_exact(self):
        img = substream(1, "test-augment").random((32, 32))
        out = apply_affine(img, 3.0, -2.0, 0.0, 1.0, 0.0)
        # interior pixels move exactly; borders fill with 0
        assert np.array_equal(out[3:, :-2], img[:-3, 2:])
        assert np.all(out[:3, :] == 0.0) and np.all(out[:, -2:] == 0.0)

    def test_shift_then_unshift_recovers_interior(self):
        img = substream(2, "test-augment").random((32, 32))
        once = apply_affine(img, 4.0, 0.0, 0.0, 1.0, 0.0)
        back = apply_affine(once, -4.0, 0.0, 0.0, 1.0, 0.0)
        assert np.allclose(back[4:-4], img[4:-4], atol=1e-6)

    def test_rotation_preserves_center_pixel(self):
        img = np.zeros((33, 33))
        img[16, 16] = 1.0  # exactly at the rotation center
        out = apply_affine(img, 0.0, 0.0, 45.0, 1.0, 0.0)
        assert abs(out[16, 16] - 1.0) <= 1e-6

    def test_quarter_turn_moves_mass(self):
        img = np.zeros((32, 32))
        img[4:8, 14:18] = 1.0  # patch above center
        out = apply_affine(img, 0.0, 0.0, 90.0, 1.0, 0.0)
        assert out.sum() > 0.9 * img.sum()  # stays in frame
        assert out[:12].sum() < 0.1 * img.sum()  # left the top band
        assert out[4:8, 14:18].sum() < 0.1 * img.sum()  # left its old spot
        # landed on the horizontal band through the center
        assert out[13:19].sum() > 0.9 * img.sum()

    def test_downscale_shrinks_support(self):
        img = np.ones((40, 40))
        out = apply_affine(img, 0.0, 0.0, 0.0, 0.9, 0.0)
        ratio = out.sum() / img.sum()
        assert abs(ratio - 0.81) <= 0.05 * 0.81  # area scales by s^2

    def test_upscale_keeps_full_frame(self):
        img = np.ones((40, 40))
        out = apply_affine(img, 0.0, 0.0, 0.0, 1.2, 0.0)
        assert np.allclose(out, 1.0, atol=1e-9)

    def test_fill_value_used_outside(self):
        img = np.ones((16, 16))
        out = apply_affine(img, 8.0, 0.0, 0.0, 1.0, 0.0)
        assert np.all(out[:8] == 0.0)

    def test_output_stays_in_unit_range(self):
        img = substream(3, "test-augment").random((32, 32))
        out = apply_affine(img, 1.7, -2.3, 11.0, 1.15, 0.0)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestParams:
    def test_default_translate_scales_with_resolution(self):
        assert default_augment_params(512).max_translate_px == 25
        assert default_augment_params(64).max_translate_px == 3
        assert default_augment_params(256).max_translate_px == 12

    def test_default_ranges(self):
        p = default_augment_params(64)
        assert p.rotate_range_deg == (-15.0, 15.0)
        assert p.scale_range == (0.8, 1.2)

    def test_identity_params_draw_nothing(self):
        p = identity_augment_params()
        rng = substream(4, "test-augment")
        t_row, t_col, angle, scale = sample_transform(p, rng)
        assert (t_row, t_col, angle, scale) == (0.0, 0.0, 0.0, 1.0)

    def test_validation_rejects_bad_ranges(self):
        with pytest.raises(ConfigurationError):
            AugmentParams(max_translate_px=-1).validate()
        with pytest.raises(ConfigurationError):
            AugmentParams(max_translate_px=0, scale_range=(1.2, 0.8)).validate()
        with pytest.raises(ConfigurationError):
            AugmentParams(max_translate_px=0, scale_range=(0.0, 1.0)).validate()

    def test_sampled_draws_respect_ranges(self):
        p = default_augment_params(64)
        rng = substream(5, "test-augment")
        for _ in range(200):
            t_row, t_col, angle, scale = sample_transform(p, rng)
            assert abs(t_row) <= 3 and abs(t_col) <= 3
            assert -15.0 <= angle <= 15.0
            assert 0.8 <= scale <= 1.2


class TestAugment:
    def test_identity_params_return_exact_copy(self):
        img = substream(6, "test-augment").random((64, 64))
        out = augment(img, identity_augment_params(), substream(7, "test-augment"))
        assert np.array_equal(out, img)
        assert out is not img  # a copy, not an alias

    def test_deterministic_given_stream(self):
        img = substream(8, "test-augment").random((64, 64))
        p = default_augment_params(64)
        a = augment(img, p, substream(9, "test-augment"))
        b = augment(img, p, substream(9, "test-augment"))
        assert np.array_equal(a, b)

    def test_draw_order_is_fixed(self):
        # two different images consume identical draws from parallel streams
        p = default_augment_params(64)
        rng1 = substream(10, "test-augment")
        rng2 = substream(10, "test-augment")
        img = substream(11, "test-augment").random((64, 64))
        augment(img, p, rng1)
        augment(img * 0.5, p, rng2)
        assert rng1.integers(1 << 30) == rng2.integers(1 << 30)  # same state left
