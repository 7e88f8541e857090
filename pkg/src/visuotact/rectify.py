"""Gel-region extraction and affine rectification.

The gel surface is described once, offline, by a polygon mask in the
undistorted camera frame. Rectification maps that irregular region onto a
rectangular patch with a 2x3 affine transform and crops it by pixel slicing.
The mask is declarative (a config file) so the pipeline stays headless and
reproducible.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (DimensionError, GeometryError, InsufficientDataError,
                     RankDeficiencyError)
from .frames import FloatPlane, RasterFrame
from .resample import RemapTable, build_remap, remap_frame


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """True if segments p1-p2 and p3-p4 intersect anywhere but a shared endpoint."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    if d1 == 0 and on_segment(p3, p4, p1):
        return True
    if d2 == 0 and on_segment(p3, p4, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, p3):
        return True
    if d4 == 0 and on_segment(p1, p2, p4):
        return True
    return False


@dataclass(frozen=True)
class PolygonMask:
    """Simple polygon (>= 3 vertices) inside a frame, vertices in pixel coords."""

    vertices: tuple[tuple[float, float], ...]
    frame_size: tuple[int, int]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "frame_size", (int(self.frame_size[0]), int(self.frame_size[1])))
        if len(verts) < 3:
            raise GeometryError(f"polygon needs >= 3 vertices, got {len(verts)}")
        width, height = self.frame_size
        for x, y in verts:
            if not (0 <= x <= width and 0 <= y <= height):
                raise GeometryError(f"vertex ({x}, {y}) outside frame {width}x{height}")
        n = len(verts)
        for i in range(n):
            a1, a2 = verts[i], verts[(i + 1) % n]
            for j in range(i + 1, n):
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue  # adjacent edges share an endpoint by construction
                b1, b2 = verts[j], verts[(j + 1) % n]
                if _segments_properly_intersect(a1, a2, b1, b2):
                    raise GeometryError("polygon is self-intersecting")


def rasterize_mask(polygon: PolygonMask) -> FloatPlane:
    """Binary 0/1 plane: 1 where the pixel center is strictly inside the polygon.

    Uses the even-odd rule, counting edge crossings strictly to the right of
    each pixel center, so boundary pixels resolve deterministically.
    """
    width, height = polygon.frame_size
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    centers_y = np.arange(height, dtype=np.float64) + 0.5
    inside = np.zeros((height, width), dtype=bool)
    verts = polygon.vertices
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if y1 == y2:
            continue
        crossing_rows = (centers_y >= min(y1, y2)) & (centers_y < max(y1, y2))
        if not crossing_rows.any():
            continue
        ys = centers_y[crossing_rows]
        x_at = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside[crossing_rows] ^= centers_x[np.newaxis, :] < x_at[:, np.newaxis]
    return FloatPlane(inside.astype(np.float64))


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """2x3 matrix mapping source pixel coordinates to rectified coordinates."""

    a: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.a, dtype=np.float64)
        if mat.shape != (2, 3):
            raise DimensionError(f"affine matrix must be 2x3, got {mat.shape}")
        if abs(np.linalg.det(mat[:, :2])) <= 1e-9:
            raise GeometryError("affine transform is not invertible")
        mat = np.ascontiguousarray(mat)
        mat.flags.writeable = False
        object.__setattr__(self, "a", mat)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N, 2) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.a[:, :2].T + self.a[:, 2]

    def inverse(self) -> "AffineTransform":
        linear = np.linalg.inv(self.a[:, :2])
        offset = -linear @ self.a[:, 2]
        return AffineTransform(np.column_stack([linear, offset]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Transform equivalent to applying ``inner`` first, then self."""
        linear = self.a[:, :2] @ inner.a[:, :2]
        offset = self.a[:, :2] @ inner.a[:, 2] + self.a[:, 2]
        return AffineTransform(np.column_stack([linear, offset]))


def estimate_affine(correspondences) -> tuple[AffineTransform, float]:
    """Fit the affine transform mapping src -> dst points.

    Solves the six parameters by normal equations (exact for 3 points,
    least squares beyond). Returns the transform and the per-point RMS
    residual of the fit.
    """
    pairs = list(correspondences)
    if len(pairs) < 3:
        raise InsufficientDataError(f"affine estimation needs >= 3 points, got {len(pairs)}")
    src = np.asarray([[p[0][0], p[0][1]] for p in pairs], dtype=np.float64)
    dst = np.asarray([[p[1][0], p[1][1]] for p in pairs], dtype=np.float64)
    centered = src - src.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
        raise RankDeficiencyError("source points are collinear")
    design = np.column_stack([src, np.ones(len(pairs))])
    gram = design.T @ design
    rows = np.linalg.solve(gram, design.T @ dst)   # (3, 2): columns are x', y' params
    transform = AffineTransform(rows.T)
    residual = design @ rows - dst
    rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    return transform, rms


@dataclass(frozen=True, eq=False)
class RoiSpec:
    """Mask + affine + crop describing one sensor's gel region."""

    mask: PolygonMask
    transform: AffineTransform
    crop: tuple[int, int, int, int]   # x0, y0, width, height in rectified coords

    def __post_init__(self):
        x0, y0, w, h = (int(v) for v in self.crop)
        if w <= 0 or h <= 0:
            raise GeometryError(f"crop size must be positive, got {w}x{h}")
        object.__setattr__(self, "crop", (x0, y0, w, h))
        fw, fh = self.mask.frame_size
        corners = np.array([[0.0, 0.0], [fw, 0.0], [fw, fh], [0.0, fh]])
        mapped = self.transform.apply(corners)
        lo = mapped.min(axis=0) - 1e-6
        hi = mapped.max(axis=0) + 1e-6
        # A crop may extend past the mapped frame (those pixels read 0) but a
        # crop fully outside it can only produce an empty image.
        if x0 >= hi[0] or y0 >= hi[1] or x0 + w <= lo[0] or y0 + h <= lo[1]:
            raise GeometryError("crop rectangle lies outside the transformed frame bounds")

    def cache_key(self) -> tuple:
        return (self.mask.vertices, self.mask.frame_size,
                self.transform.a.tobytes(), self.crop)

    def to_dict(self) -> dict:
        return {"polygon": [[x, y] for x, y in self.mask.vertices],
                "affine": self.transform.a.tolist(),
                "crop": list(self.crop),
                "frame_size": list(self.mask.frame_size)}

    @staticmethod
    def from_dict(d: dict) -> "RoiSpec":
        mask = PolygonMask(tuple((p[0], p[1]) for p in d["polygon"]),
                           tuple(d["frame_size"]))
        return RoiSpec(mask, AffineTransform(np.asarray(d["affine"])), tuple(d["crop"]))


def save_roi_spec(spec: RoiSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n")


def load_roi_spec(path: str | Path) -> RoiSpec:
    return RoiSpec.from_dict(json.loads(Path(path).read_text()))


_RECTIFY_CACHE: dict[tuple, RemapTable] = {}
_RECTIFY_LOCK = threading.Lock()


def rectification_remap(spec: RoiSpec) -> RemapTable:
    """Remap table for one RoiSpec (inverse-mapped, mask folded into weights)."""
    key = spec.cache_key()
    table = _RECTIFY_CACHE.get(key)
    if table is not None:
        return table
    x0, y0, crop_w, crop_h = spec.crop
    inverse = spec.transform.inverse()
    gx, gy = np.meshgrid(np.arange(crop_w, dtype=np.float64) + x0,
                         np.arange(crop_h, dtype=np.float64) + y0)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    src = inverse.apply(pts)
    width, height = spec.mask.frame_size
    mask = rasterize_mask(spec.mask).values
    table = build_remap(src[:, 0].reshape(crop_h, crop_w),
                        src[:, 1].reshape(crop_h, crop_w),
                        width, height, mask=mask)
    with _RECTIFY_LOCK:
        return _RECTIFY_CACHE.setdefault(key, table)


def rectify(frame: RasterFrame, spec: RoiSpec) -> RasterFrame:
    """Warp the masked gel region into the rectangular crop of ``spec``.

    Each output pixel pulls its value from the inverse-mapped source
    location with bilinear sampling; masked-out or out-of-frame source
    pixels contribute 0.
    """
    if frame.size != spec.mask.frame_size:
        raise DimensionError(
            f"frame size {frame.size} does not match mask frame {spec.mask.frame_size}")
    return remap_frame(rectification_remap(spec), frame)


def full_frame_roi(width: int, height: int) -> RoiSpec:
    """Identity RoiSpec covering the whole frame (useful default and test rig)."""
    mask = PolygonMask(((0, 0), (width, 0), (width, height), (0, height)), (width, height))
    return RoiSpec(mask, AffineTransform.identity(), (0, 0, width, height))
