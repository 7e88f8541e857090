"""Contact-information enhancement.

Three steps turn a rectified gel image into the learning-ready composite:

1. Vertical attenuation: each row is weighted by W(y) = exp(-alpha * y / H)
   to flatten the brightness gradient of the bottom-mounted illumination.
2. Difference channels against a no-contact reference:
   dark = max(0, ref - cur), bright = max(0, cur - ref).
3. Channel-wise composition (dark, bright, reference) into a 3-channel frame.

The reference is stored attenuated, in floating point, so the differencing
compares like with like and no quantization error cascades between steps.
Enhancement operates on the gray plane; feed frames through
:func:`visuotact.frames.to_gray` first for color input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelError, DimensionError, InsufficientDataError
from .frames import FloatPlane, RasterFrame, quantize_u8


@dataclass(frozen=True)
class EnhancementConfig:
    """Attenuation decay rate and pre-quantization gains for the difference channels."""

    alpha: float = 0.6
    gain_dark: float = 1.0
    gain_bright: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise DimensionError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (np.isfinite(self.gain_dark) and self.gain_dark >= 0
                and np.isfinite(self.gain_bright) and self.gain_bright >= 0):
            raise DimensionError("gains must be finite and >= 0")


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    """No-contact reference: attenuated pixel means kept in floating point."""

    plane: FloatPlane
    capture_count: int

    def __post_init__(self):
        if self.capture_count < 1:
            raise InsufficientDataError("reference needs capture_count >= 1")

    @property
    def size(self) -> tuple[int, int]:
        return self.plane.size

    def to_frame(self) -> RasterFrame:
        """8-bit view for PNG storage (quantized once, at the boundary)."""
        return self.plane.to_frame()


def attenuation_weights(height: int, alpha: float) -> np.ndarray:
    """Per-row weights W(y) = exp(-alpha * y / H); W(0) is exactly 1."""
    if height < 1:
        raise DimensionError(f"height must be >= 1, got {height}")
    y = np.arange(height, dtype=np.float64)
    return np.exp(-alpha * y / height)


def apply_attenuation(frame: RasterFrame, alpha: float) -> FloatPlane:
    """Multiply each row of a 1-channel frame by its attenuation weight."""
    if frame.channels != 1:
        raise ChannelError(f"attenuation expects a 1-channel frame, got {frame.channels}")
    weights = attenuation_weights(frame.height, alpha)
    return FloatPlane(frame.channel(0).astype(np.float64) * weights[:, np.newaxis])


def diff_channels(reference: FloatPlane, current: FloatPlane) -> tuple[FloatPlane, FloatPlane]:
    """Non-negative difference channels (dark, bright) against the reference."""
    if reference.size != current.size:
        raise DimensionError(
            f"reference size {reference.size} does not match current {current.size}")
    delta = reference.values - current.values
    dark = np.maximum(delta, 0.0)
    bright = np.maximum(-delta, 0.0)
    return FloatPlane(dark), FloatPlane(bright)


def build_reference(frames: list[RasterFrame], alpha: float) -> ReferenceFrame:
    """Average attenuated no-contact frames into a reference."""
    if not frames:
        raise InsufficientDataError("build_reference needs at least one frame")
    size = frames[0].size
    total = np.zeros((size[1], size[0]), dtype=np.float64)
    for frame in frames:
        if frame.size != size:
            raise DimensionError(f"frame size {frame.size} does not match first frame {size}")
        total += apply_attenuation(frame, alpha).values
    return ReferenceFrame(FloatPlane(total / len(frames)), len(frames))


def enhance(reference: ReferenceFrame, current: RasterFrame,
            config: EnhancementConfig = EnhancementConfig()) -> RasterFrame:
    """Compose the enhanced tactile image: channels (dark, bright, reference).

    The current frame is attenuated, differenced against the reference,
    difference channels are scaled by their gains, and every plane is
    quantized to 8 bits only here, at the stage output.
    """
    if current.size != reference.size:
        raise DimensionError(
            f"current frame size {current.size} does not match reference {reference.size}")
    attenuated = apply_attenuation(current, config.alpha)
    dark, bright = diff_channels(reference.plane, attenuated)
    composite = np.stack([
        quantize_u8(dark.values * config.gain_dark),
        quantize_u8(bright.values * config.gain_bright),
        quantize_u8(reference.plane.values),
    ], axis=-1)
    return RasterFrame(composite, current.timestamp_us)
