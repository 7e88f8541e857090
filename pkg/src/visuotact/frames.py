"""Raster image, coordinate, and timestamp primitives shared by every stage.

Conventions used throughout the package:

- Pixel origin is the top-left corner; ``x`` grows rightward (columns),
  ``y`` grows downward (rows).
- A pixel's continuous coordinate is its integer index, so ``(0, 0)`` is the
  center of the top-left sample and the valid sampling domain of a
  ``width x height`` frame is ``[0, width-1] x [0, height-1]``.
- Intermediate arithmetic stays in floating point; quantization to 8 bits
  happens only at stage outputs, rounding half away from zero and clamping
  to ``[0, 255]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from PIL import Image

from .errors import ChannelError, DimensionError, OutOfRangeError

# ITU-R BT.601 luma weights for RGB -> gray.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


class PixelCoord(NamedTuple):
    """Continuous pixel-space coordinate (x rightward, y downward)."""

    x: float
    y: float


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Quantize floating-point samples to uint8.

    Rounds half away from zero and clamps to [0, 255]. Because negative
    values clamp to 0 anyway, ``floor(v + 0.5)`` implements the rule.
    """
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def _as_readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class RasterFrame:
    """8-bit image, row-major and channel-interleaved, with optional timestamp.

    ``data`` has shape ``(height, width, channels)`` with ``channels`` 1 or 3.
    The stored array is a read-only view; all operations on frames are pure.
    """

    data: np.ndarray
    timestamp_us: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise DimensionError(f"frame data must be HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ChannelError(f"frame must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.dtype != np.uint8:
            raise DimensionError(f"frame data must be uint8, got {arr.dtype}")
        object.__setattr__(self, "data", _as_readonly(np.ascontiguousarray(arr)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        """(width, height) in pixels."""
        return (self.width, self.height)

    def channel(self, index: int) -> np.ndarray:
        """One channel as a read-only (height, width) uint8 array."""
        return self.data[:, :, index]

    def with_timestamp(self, timestamp_us: int | None) -> "RasterFrame":
        return RasterFrame(self.data, timestamp_us)

    @staticmethod
    def full(width: int, height: int, value: int, channels: int = 1,
             timestamp_us: int | None = None) -> "RasterFrame":
        data = np.full((height, width, channels), value, dtype=np.uint8)
        return RasterFrame(data, timestamp_us)

    @staticmethod
    def zeros(width: int, height: int, channels: int = 1,
              timestamp_us: int | None = None) -> "RasterFrame":
        return RasterFrame.full(width, height, 0, channels, timestamp_us)


def frames_equal(a: RasterFrame, b: RasterFrame) -> bool:
    """Byte-for-byte pixel equality (timestamps ignored)."""
    return a.data.shape == b.data.shape and bool(np.array_equal(a.data, b.data))


@dataclass(frozen=True, eq=False)
class FloatPlane:
    """Single-channel real-valued image used between pipeline stages.

    Keeps full floating-point precision so quantization error does not
    cascade through the enhancement chain.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"plane must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DimensionError("plane values must be finite")
        object.__setattr__(self, "values", _as_readonly(np.ascontiguousarray(arr)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return (self.width, self.height)

    @staticmethod
    def from_frame(frame: RasterFrame) -> "FloatPlane":
        if frame.channels != 1:
            raise ChannelError("FloatPlane.from_frame expects a 1-channel frame")
        return FloatPlane(frame.channel(0).astype(np.float64))

    def to_frame(self, timestamp_us: int | None = None) -> RasterFrame:
        return RasterFrame(quantize_u8(self.values), timestamp_us)


def to_gray(frame: RasterFrame) -> RasterFrame:
    """Collapse an RGB frame to one gray channel; 1-channel input passes through.

    gray = round(0.299 R + 0.587 G + 0.114 B), quantized per package rules.
    """
    if frame.channels == 1:
        return frame
    weights = np.asarray(GRAY_WEIGHTS, dtype=np.float64)
    gray = frame.data.astype(np.float64) @ weights
    return RasterFrame(quantize_u8(gray), frame.timestamp_us)


def bilinear_sample(frame: RasterFrame, at: PixelCoord) -> np.ndarray:
    """Bilinear interpolation of the four samples around ``at``.

    Returns one float per channel. Coordinates must lie within
    ``[0, width-1] x [0, height-1]``.
    """
    x, y = float(at[0]), float(at[1])
    if not (0.0 <= x <= frame.width - 1 and 0.0 <= y <= frame.height - 1):
        raise OutOfRangeError(
            f"sample point ({x}, {y}) outside [0, {frame.width - 1}] x [0, {frame.height - 1}]")
    x0 = min(int(np.floor(x)), frame.width - 2) if frame.width > 1 else 0
    y0 = min(int(np.floor(y)), frame.height - 2) if frame.height > 1 else 0
    dx = x - x0
    dy = y - y0
    data = frame.data.astype(np.float64)
    x1 = min(x0 + 1, frame.width - 1)
    y1 = min(y0 + 1, frame.height - 1)
    top = (1.0 - dx) * data[y0, x0] + dx * data[y0, x1]
    bottom = (1.0 - dx) * data[y1, x0] + dx * data[y1, x1]
    return (1.0 - dy) * top + dy * bottom


def read_png(path: str | Path, timestamp_us: int | None = None) -> RasterFrame:
    """Load a PNG as a RasterFrame (gray -> 1 channel, color -> 3)."""
    with Image.open(path) as img:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB" if img.mode in ("RGBA", "P", "CMYK") else "L")
        arr = np.asarray(img, dtype=np.uint8)
    return RasterFrame(arr, timestamp_us)


def write_png(frame: RasterFrame, path: str | Path) -> None:
    """Write a frame as lossless 8-bit PNG (timestamps live in sidecar metadata)."""
    arr = frame.data[:, :, 0] if frame.channels == 1 else frame.data
    Image.fromarray(arr, mode="L" if frame.channels == 1 else "RGB").save(path, format="PNG")
