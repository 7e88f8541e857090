import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visuotact import (EnhancementConfig, FloatPlane, RasterFrame,
                       apply_attenuation, attenuation_weights, build_reference,
                       diff_channels, enhance)
from visuotact.errors import ChannelError, DimensionError, InsufficientDataError
from visuotact.frames import quantize_u8


class TestAttenuationWeights:
    def test_alpha_zero_all_ones(self):
        assert np.array_equal(attenuation_weights(50, 0.0), np.ones(50))

    def test_top_row_exactly_one(self):
        assert attenuation_weights(100, 3.7)[0] == 1.0

    def test_bottom_value(self):
        # y = 100 with H = 100 sits one row past the frame; evaluate via formula
        weights = attenuation_weights(101, 1.0)
        assert weights[100] == pytest.approx(math.exp(-100 / 101))
        assert attenuation_weights(100, 1.0)[99] == pytest.approx(math.exp(-0.99))

    def test_strictly_decreasing_for_positive_alpha(self):
        weights = attenuation_weights(64, 0.3)
        assert np.all(np.diff(weights) < 0)

    def test_zero_height_rejected(self):
        with pytest.raises(DimensionError):
            attenuation_weights(0, 1.0)


class TestApplyAttenuation:
    def test_alpha_zero_identity_values(self):
        frame = RasterFrame.full(8, 4, 123)
        assert np.array_equal(apply_attenuation(frame, 0.0).values,
                              np.full((4, 8), 123.0))

    def test_per_row_scaling(self):
        frame = RasterFrame.full(3, 2, 100)
        plane = apply_attenuation(frame, 1.0)
        assert plane.values[0, 0] == pytest.approx(100.0)
        assert plane.values[1, 0] == pytest.approx(100.0 * math.exp(-0.5))

    def test_zero_image(self):
        assert not apply_attenuation(RasterFrame.zeros(5, 5), 2.0).values.any()

    def test_multichannel_rejected(self):
        with pytest.raises(ChannelError):
            apply_attenuation(RasterFrame.zeros(4, 4, channels=3), 1.0)


class TestDiffChannels:
    def test_identical_inputs_all_zero(self):
        plane = FloatPlane(np.full((4, 4), 55.0))
        dark, bright = diff_channels(plane, plane)
        assert not dark.values.any() and not bright.values.any()

    def test_darkening(self):
        dark, bright = diff_channels(FloatPlane(np.array([[100.0]])),
                                     FloatPlane(np.array([[80.0]])))
        assert dark.values[0, 0] == 20.0 and bright.values[0, 0] == 0.0

    def test_brightening(self):
        dark, bright = diff_channels(FloatPlane(np.array([[80.0]])),
                                     FloatPlane(np.array([[100.0]])))
        assert dark.values[0, 0] == 0.0 and bright.values[0, 0] == 20.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            diff_channels(FloatPlane(np.zeros((2, 2))), FloatPlane(np.zeros((3, 2))))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_mutual_exclusivity(self, seed):
        gen = np.random.default_rng(seed)
        ref = FloatPlane(gen.uniform(0, 255, (8, 8)))
        cur = FloatPlane(gen.uniform(0, 255, (8, 8)))
        dark, bright = diff_channels(ref, cur)
        assert not np.any(dark.values * bright.values)


class TestBuildReference:
    def test_single_frame(self):
        frame = RasterFrame.full(6, 6, 90)
        ref = build_reference([frame], alpha=0.4)
        assert ref.capture_count == 1
        assert np.array_equal(ref.plane.values, apply_attenuation(frame, 0.4).values)

    def test_mean_of_two(self):
        ref = build_reference([RasterFrame.full(4, 4, 10), RasterFrame.full(4, 4, 30)], 0.0)
        assert np.array_equal(ref.plane.values, np.full((4, 4), 20.0))

    def test_empty_list_rejected(self):
        with pytest.raises(InsufficientDataError):
            build_reference([], 0.5)

    def test_noise_averaging(self, rng):
        frames = [RasterFrame(quantize_u8(rng.normal(128, 8, (32, 32)))[:, :, np.newaxis])
                  for _ in range(16)]
        ref = build_reference(frames, alpha=0.0)
        residual_std = (ref.plane.values - 128.0).std()
        assert 2.0 * 0.7 <= residual_std <= 2.0 * 1.3


class TestEnhance:
    def test_no_contact_gives_zero_difference_channels(self, rng):
        source = RasterFrame(rng.integers(40, 200, (10, 12, 1), dtype=np.uint8))
        ref = build_reference([source], alpha=0.6)
        out = enhance(ref, source, EnhancementConfig(alpha=0.6))
        assert out.channels == 3
        assert not out.channel(0).any()
        assert not out.channel(1).any()

    def test_reference_channel_byte_exact(self, rng):
        source = RasterFrame(rng.integers(40, 200, (10, 12, 1), dtype=np.uint8))
        ref = build_reference([source], alpha=0.6)
        out = enhance(ref, RasterFrame(rng.integers(0, 255, (10, 12, 1), dtype=np.uint8)),
                      EnhancementConfig(alpha=0.6))
        assert np.array_equal(out.channel(2), quantize_u8(ref.plane.values))

    def test_dimension_mismatch(self):
        ref = build_reference([RasterFrame.zeros(8, 8)], 0.0)
        with pytest.raises(DimensionError):
            enhance(ref, RasterFrame.zeros(9, 8), EnhancementConfig())

    def test_gains_scale_difference_channels(self):
        ref = build_reference([RasterFrame.full(4, 4, 100)], alpha=0.0)
        current = RasterFrame.full(4, 4, 90)
        out1 = enhance(ref, current, EnhancementConfig(alpha=0.0, gain_dark=1.0))
        out2 = enhance(ref, current, EnhancementConfig(alpha=0.0, gain_dark=2.0))
        assert np.all(out1.channel(0) == 10)
        assert np.all(out2.channel(0) == 20)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 500))
    def test_monotonicity_in_current_frame(self, seed):
        gen = np.random.default_rng(seed)
        ref = build_reference(
            [RasterFrame(gen.integers(60, 200, (6, 6, 1), dtype=np.uint8))], 0.3)
        base = gen.integers(30, 220, (6, 6, 1), dtype=np.uint8)
        darker = np.clip(base.astype(int) - gen.integers(0, 30, base.shape), 0, 255)
        out_base = enhance(ref, RasterFrame(base), EnhancementConfig(alpha=0.3))
        out_dark = enhance(ref, RasterFrame(darker.astype(np.uint8)),
                           EnhancementConfig(alpha=0.3))
        assert np.all(out_dark.channel(0).astype(int) >= out_base.channel(0).astype(int))
        assert np.all(out_dark.channel(1).astype(int) <= out_base.channel(1).astype(int))
