import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visuotact import (FloatPlane, PixelCoord, RasterFrame, bilinear_sample,
                       frames_equal, read_png, to_gray, write_png)
from visuotact.errors import ChannelError, DimensionError, OutOfRangeError
from visuotact.frames import quantize_u8


class TestRasterFrame:
    def test_rejects_bad_channel_count(self):
        with pytest.raises(ChannelError):
            RasterFrame(np.zeros((4, 4, 2), dtype=np.uint8))

    def test_rejects_wrong_dtype(self):
        with pytest.raises(DimensionError):
            RasterFrame(np.zeros((4, 4, 1), dtype=np.float32))

    def test_data_is_read_only(self):
        frame = RasterFrame.zeros(4, 4)
        with pytest.raises(ValueError):
            frame.data[0, 0, 0] = 1

    def test_2d_array_becomes_single_channel(self):
        frame = RasterFrame(np.zeros((3, 5), dtype=np.uint8))
        assert frame.size == (5, 3)
        assert frame.channels == 1

    def test_source_array_stays_writable(self):
        arr = np.zeros((2, 2, 1), dtype=np.uint8)
        RasterFrame(arr)
        arr[0, 0, 0] = 7  # no exception


class TestQuantize:
    def test_half_away_from_zero(self):
        values = np.array([0.5, 1.5, 2.4, 2.5, -0.2, -1.0, 300.0])
        assert quantize_u8(values).tolist() == [1, 2, 2, 3, 0, 0, 255]


class TestToGray:
    def test_equal_channels_pass_through_value(self):
        frame = RasterFrame.full(8, 8, 100, channels=3)
        gray = to_gray(frame)
        assert gray.channels == 1
        assert np.all(gray.data == 100)

    def test_single_channel_identity(self):
        frame = RasterFrame.full(8, 8, 42)
        assert to_gray(frame) is frame

    def test_pure_red_weight(self):
        data = np.zeros((1, 1, 3), dtype=np.uint8)
        data[0, 0, 0] = 255
        gray = to_gray(RasterFrame(data))
        # round(0.299 * 255) = round(76.245)
        assert gray.data[0, 0, 0] == 76

    def test_idempotent_on_gray(self):
        frame = RasterFrame.full(4, 4, 9)
        assert frames_equal(to_gray(to_gray(frame)), to_gray(frame))


class TestBilinearSample:
    @staticmethod
    def make_frame():
        data = np.array([[0, 100], [50, 150]], dtype=np.uint8)[:, :, np.newaxis]
        return RasterFrame(data)

    def test_lattice_points_exact(self):
        frame = self.make_frame()
        assert bilinear_sample(frame, PixelCoord(1, 0))[0] == 100.0
        assert bilinear_sample(frame, PixelCoord(0, 1))[0] == 50.0

    def test_midpoint(self):
        frame = self.make_frame()
        assert bilinear_sample(frame, PixelCoord(0.5, 0))[0] == 50.0

    def test_quarter_point(self):
        frame = self.make_frame()
        assert bilinear_sample(frame, PixelCoord(0.25, 0))[0] == 25.0

    def test_out_of_bounds(self):
        frame = self.make_frame()
        with pytest.raises(OutOfRangeError):
            bilinear_sample(frame, PixelCoord(1.01, 0))
        with pytest.raises(OutOfRangeError):
            bilinear_sample(frame, PixelCoord(0, -0.01))

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(0, 7), y=st.floats(0, 5), seed=st.integers(0, 100))
    def test_bounded_by_neighbors(self, x, y, seed):
        gen = np.random.default_rng(seed)
        frame = RasterFrame(gen.integers(0, 256, (6, 8, 1), dtype=np.uint8))
        value = bilinear_sample(frame, PixelCoord(x, y))[0]
        x0, y0 = int(np.floor(min(x, 6))), int(np.floor(min(y, 4)))
        block = frame.data[y0:y0 + 2, x0:x0 + 2, 0]
        assert block.min() - 1e-9 <= value <= block.max() + 1e-9


class TestRemapKernel:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 500))
    def test_remap_matches_bilinear_sample_pointwise(self, seed):
        # the image warps and the scalar sampler must be the same kernel
        from visuotact.resample import build_remap, remap_frame

        gen = np.random.default_rng(seed)
        frame = RasterFrame(gen.integers(0, 256, (7, 9, 1), dtype=np.uint8))
        xs = gen.uniform(0, 8, (4, 5))
        ys = gen.uniform(0, 6, (4, 5))
        table = build_remap(xs, ys, frame.width, frame.height)
        warped = remap_frame(table, frame)
        for row in range(4):
            for col in range(5):
                expected = bilinear_sample(frame, PixelCoord(xs[row, col], ys[row, col]))[0]
                assert abs(float(warped.data[row, col, 0]) - expected) <= 0.5 + 1e-3

    def test_out_of_source_fills_zero(self):
        from visuotact.resample import build_remap, remap_frame

        frame = RasterFrame.full(4, 4, 200)
        xs = np.array([[-1.0, 2.0], [5.0, 3.0]])
        ys = np.array([[0.0, 1.0], [2.0, 9.0]])
        warped = remap_frame(build_remap(xs, ys, 4, 4), frame)
        assert warped.data[:, :, 0].tolist() == [[0, 200], [0, 0]]


class TestFloatPlane:
    def test_rejects_non_finite(self):
        with pytest.raises(DimensionError):
            FloatPlane(np.array([[1.0, np.inf]]))

    def test_round_trip_to_frame(self):
        plane = FloatPlane(np.array([[1.4, 250.6], [0.5, -3.0]]))
        frame = plane.to_frame()
        assert frame.data[:, :, 0].tolist() == [[1, 251], [1, 0]]


class TestPngIO:
    def test_round_trip_gray_and_rgb(self, tmp_path, rng):
        for channels in (1, 3):
            frame = RasterFrame(rng.integers(0, 256, (20, 30, channels), dtype=np.uint8))
            path = tmp_path / f"frame_{channels}.png"
            write_png(frame, path)
            loaded = read_png(path)
            assert frames_equal(frame, loaded)

    def test_timestamp_in_sidecar_not_file(self, tmp_path):
        frame = RasterFrame.full(4, 4, 7, timestamp_us=123456)
        path = tmp_path / "f.png"
        write_png(frame, path)
        assert read_png(path).timestamp_us is None
        assert read_png(path, timestamp_us=99).timestamp_us == 99
