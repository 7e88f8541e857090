"""Precomputed bilinear remap tables.

Image-sized warps (undistortion, rectification, scaling) share one kernel:
a table of four gather indices and four blend weights per output pixel,
built once per mapping and applied per frame. That keeps the per-frame cost
to four gathers and a weighted sum, which is what the real-time throughput
target requires.

Weights fold in both the validity of the source location (out-of-source
pixels produce 0) and, optionally, a source-domain mask (masked-out source
pixels contribute 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .frames import FloatPlane, RasterFrame, quantize_u8


@dataclass(frozen=True, eq=False)
class RemapTable:
    """Gather indices and blend weights for one output grid.

    ``idx`` has shape (4, H_out * W_out) of flat source indices;
    ``weights`` the matching bilinear weights (zeroed where invalid/masked).
    """

    out_width: int
    out_height: int
    src_width: int
    src_height: int
    idx: np.ndarray
    weights: np.ndarray


def build_remap(source_x: np.ndarray, source_y: np.ndarray,
                src_width: int, src_height: int,
                mask: np.ndarray | None = None) -> RemapTable:
    """Build a remap table from per-output-pixel source coordinates.

    source_x/source_y: (H_out, W_out) float arrays of source sampling
    locations. Locations outside ``[0, src_width-1] x [0, src_height-1]``
    get zero weight. ``mask``, when given, is an (src_height, src_width)
    array whose values multiply the contribution of each source sample
    (typically binary 0/1).
    """
    if source_x.shape != source_y.shape or source_x.ndim != 2:
        raise DimensionError("source_x and source_y must be equal-shaped 2-D arrays")
    out_h, out_w = source_x.shape
    xs = source_x.astype(np.float64).ravel()
    ys = source_y.astype(np.float64).ravel()

    valid = (xs >= 0.0) & (xs <= src_width - 1) & (ys >= 0.0) & (ys <= src_height - 1)
    xs_c = np.where(valid, xs, 0.0)
    ys_c = np.where(valid, ys, 0.0)

    x0 = np.minimum(np.floor(xs_c), max(src_width - 2, 0)).astype(np.int64)
    y0 = np.minimum(np.floor(ys_c), max(src_height - 2, 0)).astype(np.int64)
    dx = (xs_c - x0).astype(np.float32)
    dy = (ys_c - y0).astype(np.float32)
    x1 = np.minimum(x0 + 1, src_width - 1)
    y1 = np.minimum(y0 + 1, src_height - 1)

    idx = np.stack([
        y0 * src_width + x0,
        y0 * src_width + x1,
        y1 * src_width + x0,
        y1 * src_width + x1,
    ]).astype(np.int64)
    weights = np.stack([
        (1.0 - dx) * (1.0 - dy),
        dx * (1.0 - dy),
        (1.0 - dx) * dy,
        dx * dy,
    ]).astype(np.float32)
    weights *= valid.astype(np.float32)
    if mask is not None:
        if mask.shape != (src_height, src_width):
            raise DimensionError("mask shape must match the source dimensions")
        weights = weights * mask.astype(np.float32).ravel()[idx]
    return RemapTable(out_w, out_h, src_width, src_height, idx, weights)


def remap_plane(table: RemapTable, plane: np.ndarray) -> np.ndarray:
    """Apply the table to one (src_height, src_width) plane; returns float32."""
    if plane.shape != (table.src_height, table.src_width):
        raise DimensionError(
            f"plane shape {plane.shape} does not match table source "
            f"({table.src_height}, {table.src_width})")
    flat = plane.ravel().astype(np.float32, copy=False)
    out = table.weights[0] * flat[table.idx[0]]
    out += table.weights[1] * flat[table.idx[1]]
    out += table.weights[2] * flat[table.idx[2]]
    out += table.weights[3] * flat[table.idx[3]]
    return out.reshape(table.out_height, table.out_width)


def remap_plane_rows(table: RemapTable, plane: np.ndarray,
                     row_start: int, row_stop: int, out: np.ndarray) -> None:
    """Apply the table for output rows [row_start, row_stop) into ``out``.

    Row-sliced variant backing opt-in thread parallelism; results are
    identical to :func:`remap_plane`.
    """
    flat = plane.ravel().astype(np.float32, copy=False)
    lo = row_start * table.out_width
    hi = row_stop * table.out_width
    acc = table.weights[0, lo:hi] * flat[table.idx[0, lo:hi]]
    acc += table.weights[1, lo:hi] * flat[table.idx[1, lo:hi]]
    acc += table.weights[2, lo:hi] * flat[table.idx[2, lo:hi]]
    acc += table.weights[3, lo:hi] * flat[table.idx[3, lo:hi]]
    out[row_start:row_stop] = acc.reshape(row_stop - row_start, table.out_width)


def remap_frame(table: RemapTable, frame: RasterFrame) -> RasterFrame:
    """Apply the table to every channel of a frame and quantize to 8 bits."""
    if (frame.width, frame.height) != (table.src_width, table.src_height):
        raise DimensionError(
            f"frame size {frame.size} does not match table source "
            f"({table.src_width}, {table.src_height})")
    channels = [quantize_u8(remap_plane(table, frame.channel(c)))
                for c in range(frame.channels)]
    return RasterFrame(np.stack(channels, axis=-1), frame.timestamp_us)


def remap_float_plane(table: RemapTable, plane: FloatPlane) -> FloatPlane:
    if (plane.width, plane.height) != (table.src_width, table.src_height):
        raise DimensionError("plane size does not match table source")
    return FloatPlane(remap_plane(table, plane.values))


def scale_frame(frame: RasterFrame, factor: float) -> RasterFrame:
    """Resize a frame by ``factor`` with bilinear resampling.

    Output size is round(dim * factor); source locations follow the
    pixel-center convention src = (dst + 0.5) / factor - 0.5, clamped to the
    valid domain so border pixels replicate rather than darken.
    """
    if factor <= 0:
        raise DimensionError(f"scale factor must be > 0, got {factor}")
    out_w = max(1, int(round(frame.width * factor)))
    out_h = max(1, int(round(frame.height * factor)))
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) / factor - 0.5
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) / factor - 0.5
    xs = np.clip(xs, 0.0, frame.width - 1)
    ys = np.clip(ys, 0.0, frame.height - 1)
    gx, gy = np.meshgrid(xs, ys)
    table = build_remap(gx, gy, frame.width, frame.height)
    return remap_frame(table, frame)
