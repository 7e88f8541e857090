"""Synthetic tactile-frame generation.

Stands in for the physical sensor: renders no-contact reference frames with
a vertical illumination gradient (bottom-mounted LEDs make lower rows
brighter), indentation contacts with ground-truth masks, checkerboard
calibration views through the fisheye model, and a wear model that degrades
the scene over grasp-release cycles for lifespan studies.

Everything is deterministic per (inputs, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import (CalibrationView, CameraIntrinsics, ViewExtrinsics,
                     _distort_arrays, _undistort_arrays)
from .errors import DimensionError, GeometryError
from .frames import FloatPlane, RasterFrame, quantize_u8
from .resample import build_remap, remap_frame

PROFILES = ("gaussian", "spherical_cap")

# A contact counts as visible once it darkens a pixel by more than one gray level.
TRUTH_THRESHOLD = 1.0


@dataclass(frozen=True)
class GelScene:
    """Illumination model of the gel: base level, vertical gradient, noise.

    Row y renders at base_brightness * (1 + gradient_strength * y / height),
    so the bottom rows are brighter by up to the gradient factor. The scene
    must not clip at base settings: base * (1 + g) <= 255.
    """

    width: int = 640
    height: int = 480
    base_brightness: int = 150
    gradient_strength: float = 0.3
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DimensionError(f"scene size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.gradient_strength < 1):
            raise DimensionError(
                f"gradient_strength must be in [0, 1), got {self.gradient_strength}")
        if not (0 < self.base_brightness <= 255):
            raise DimensionError("base_brightness must be in (0, 255]")
        if self.base_brightness * (1.0 + self.gradient_strength) > 255.0:
            raise DimensionError("scene clips: base * (1 + gradient) exceeds 255")
        if self.noise_sigma < 0:
            raise DimensionError("noise_sigma must be >= 0")

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height,
                "base_brightness": self.base_brightness,
                "gradient_strength": self.gradient_strength,
                "noise_sigma": self.noise_sigma}

    @staticmethod
    def from_dict(d: dict) -> "GelScene":
        return GelScene(width=int(d["width"]), height=int(d["height"]),
                        base_brightness=int(d["base_brightness"]),
                        gradient_strength=float(d["gradient_strength"]),
                        noise_sigma=float(d.get("noise_sigma", 0.0)))


@dataclass(frozen=True)
class Indenter:
    """One contact stimulus: disc footprint, fractional darkening profile."""

    center: tuple[float, float]
    radius: float
    depth: float
    profile: str = "gaussian"

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError(f"indenter radius must be > 0, got {self.radius}")
        if not (0 < self.depth <= 1):
            raise GeometryError(f"indenter depth must be in (0, 1], got {self.depth}")
        if self.profile not in PROFILES:
            raise GeometryError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def footprint(self, width: int, height: int) -> np.ndarray:
        """Fractional darkening in [0, 1] over the pixel grid (0 outside the disc)."""
        cx, cy = self.center
        if not (0 <= cx < width and 0 <= cy < height):
            raise GeometryError(f"indenter center ({cx}, {cy}) outside frame {width}x{height}")
        xs = np.arange(width, dtype=np.float64) - cx
        ys = np.arange(height, dtype=np.float64) - cy
        rho = np.hypot(xs[np.newaxis, :], ys[:, np.newaxis]) / self.radius
        if self.profile == "gaussian":
            shape = np.exp(-4.5 * rho * rho)
        else:
            shape = np.sqrt(np.maximum(0.0, 1.0 - rho * rho))
        shape[rho > 1.0] = 0.0
        return self.depth * shape


@dataclass(frozen=True)
class ScratchEvent:
    """Structural damage appearing at a given cycle: a dark line segment."""

    cycle: int
    start: tuple[float, float]
    end: tuple[float, float]
    depth: float
    width: float = 1.5

    def __post_init__(self):
        if not (0 < self.depth <= 1):
            raise GeometryError(f"scratch depth must be in (0, 1], got {self.depth}")
        if self.width <= 0:
            raise GeometryError("scratch width must be > 0")


@dataclass(frozen=True)
class WearModel:
    """Exponential wear law driving the lifespan simulation.

    The gradient strength grows toward a cap (illumination uniformity
    degrades), the contact response shrinks (deformation visibility
    degrades), and scratch events burn permanent marks into the gel
    (structural damage). All three effects only ever lower the sensor's
    state of health.
    """

    uniformity_decay: float = 0.0
    contrast_decay: float = 0.0
    scratch_events: tuple[ScratchEvent, ...] = ()
    gradient_cap: float = 0.6

    def __post_init__(self):
        if self.uniformity_decay < 0 or self.contrast_decay < 0:
            raise DimensionError("decay rates must be >= 0")

    @staticmethod
    def nominal() -> "WearModel":
        """Wear constants calibrated so the bundled benchmark scene's state of
        health crosses the 80% failure threshold near cycle 2000."""
        return WearModel(
            uniformity_decay=5.0e-5,
            contrast_decay=4.5e-4,
            scratch_events=(
                ScratchEvent(cycle=1200, start=(120.0, 60.0), end=(420.0, 300.0),
                             depth=0.5, width=1.5),
            ),
        )

    def to_dict(self) -> dict:
        return {"uniformity_decay": self.uniformity_decay,
                "contrast_decay": self.contrast_decay,
                "gradient_cap": self.gradient_cap,
                "scratches": [{"cycle": s.cycle, "start": list(s.start),
                               "end": list(s.end), "depth": s.depth, "width": s.width}
                              for s in self.scratch_events]}

    @staticmethod
    def from_dict(d: dict) -> "WearModel":
        return WearModel(
            uniformity_decay=float(d.get("uniformity_decay", 0.0)),
            contrast_decay=float(d.get("contrast_decay", 0.0)),
            gradient_cap=float(d.get("gradient_cap", 0.6)),
            scratch_events=tuple(
                ScratchEvent(cycle=int(s["cycle"]),
                             start=tuple(s["start"]), end=tuple(s["end"]),
                             depth=float(s["depth"]), width=float(s.get("width", 1.5)))
                for s in d.get("scratches", ())))


@dataclass(frozen=True)
class DegradedScene:
    """A scene after ``cycle`` wear cycles: scratch overlay plus contrast loss."""

    scene: GelScene
    contrast_scale: float
    scratches: tuple[ScratchEvent, ...]
    texture_seed: int


def degrade(scene: GelScene, wear: WearModel, cycle: int, seed: int = 0) -> DegradedScene:
    """Evaluate the wear law at ``cycle``.

    cycle 0 (or all-zero rates with no scratches) reproduces the original
    scene exactly; the seed only shapes the organic depth texture along
    scratch marks.
    """
    if cycle < 0:
        raise DimensionError(f"cycle must be >= 0, got {cycle}")
    g0 = scene.gradient_strength
    cap = min(wear.gradient_cap, 255.0 / scene.base_brightness - 1.0 - 1e-9)
    cap = max(cap, g0)
    g = g0 + (cap - g0) * (1.0 - math.exp(-wear.uniformity_decay * cycle))
    contrast = math.exp(-wear.contrast_decay * cycle)
    active = tuple(s for s in wear.scratch_events if s.cycle <= cycle)
    worn = GelScene(scene.width, scene.height, scene.base_brightness, g, scene.noise_sigma)
    return DegradedScene(worn, contrast, active, seed)


def _scratch_overlay(width: int, height: int, scratches: tuple[ScratchEvent, ...],
                     texture_seed: int) -> np.ndarray:
    """Multiplicative darkening field of all active scratches."""
    factor = np.ones((height, width), dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)[np.newaxis, :]
    ys = np.arange(height, dtype=np.float64)[:, np.newaxis]
    for index, scratch in enumerate(scratches):
        (x0, y0), (x1, y1) = scratch.start, scratch.end
        dx, dy = x1 - x0, y1 - y0
        length_sq = dx * dx + dy * dy
        if length_sq == 0:
            continue
        t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / length_sq, 0.0, 1.0)
        dist = np.hypot(xs - (x0 + t * dx), ys - (y0 + t * dy))
        falloff = np.maximum(0.0, 1.0 - dist / scratch.width)
        rng = np.random.default_rng([texture_seed, index])
        amp = rng.uniform(-1.0, 1.0, 3)
        phase = rng.uniform(0.0, 2.0 * math.pi, 3)
        ripple = sum(amp[h] * np.sin(2.0 * math.pi * (h + 1) * t + phase[h])
                     for h in range(3)) / 3.0
        local_depth = np.clip(scratch.depth * (1.0 + 0.3 * ripple), 0.0, 1.0)
        factor *= 1.0 - local_depth * falloff
    return factor


def _reference_field(scene: GelScene | DegradedScene, seed: int) -> np.ndarray:
    """Float reference image prior to quantization (noise included, unclamped)."""
    if isinstance(scene, DegradedScene):
        base_scene = scene.scene
        overlay = _scratch_overlay(base_scene.width, base_scene.height,
                                   scene.scratches, scene.texture_seed)
    else:
        base_scene = scene
        overlay = None
    rows = base_scene.base_brightness * (
        1.0 + base_scene.gradient_strength * np.arange(base_scene.height, dtype=np.float64)
        / base_scene.height)
    field = np.broadcast_to(rows[:, np.newaxis],
                            (base_scene.height, base_scene.width)).copy()
    if overlay is not None:
        field *= overlay
    if base_scene.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        field += rng.normal(0.0, base_scene.noise_sigma, field.shape)
    return field


def render_reference(scene: GelScene | DegradedScene, seed: int = 0) -> RasterFrame:
    """Render a no-contact frame. Deterministic per (scene, seed)."""
    return RasterFrame(quantize_u8(_reference_field(scene, seed)))


def render_contact(scene: GelScene | DegradedScene, indenters: list[Indenter],
                   seed: int = 0) -> tuple[RasterFrame, FloatPlane]:
    """Render a contact frame plus its ground-truth contact mask.

    Indenters darken the reference multiplicatively (overlaps compose
    multiplicatively); the mask is 1 wherever the total darkening exceeds
    one gray level. With no indenters the frame equals the reference
    byte for byte.
    """
    base_scene = scene.scene if isinstance(scene, DegradedScene) else scene
    contrast = scene.contrast_scale if isinstance(scene, DegradedScene) else 1.0
    reference = _reference_field(scene, seed)
    factor = np.ones_like(reference)
    for indenter in indenters:
        footprint = indenter.footprint(base_scene.width, base_scene.height)
        factor *= 1.0 - contrast * footprint
    contact = reference * factor
    truth = (reference - contact) > TRUTH_THRESHOLD
    return RasterFrame(quantize_u8(contact)), FloatPlane(truth.astype(np.float64))


def distort_image_render(pinhole_frame: RasterFrame,
                         intrinsics: CameraIntrinsics) -> RasterFrame:
    """Render the fisheye camera's view of a pinhole-domain image.

    The inverse of full-image undistortion: each fisheye pixel samples the
    pinhole image at its undistorted position. Pixels that map outside the
    pinhole frame (or past the model's domain) render as 0.
    """
    if pinhole_frame.size != intrinsics.image_size:
        raise DimensionError(
            f"frame size {pinhole_frame.size} does not match intrinsics "
            f"{intrinsics.image_size}")
    gx, gy = np.meshgrid(np.arange(intrinsics.width, dtype=np.float64),
                         np.arange(intrinsics.height, dtype=np.float64))
    src_x, src_y, valid = _undistort_arrays(gx, gy, intrinsics)
    src_x = np.where(valid, src_x, -1.0)   # out-of-range coordinates drop out
    src_y = np.where(valid, src_y, -1.0)
    table = build_remap(src_x, src_y, intrinsics.width, intrinsics.height)
    return remap_frame(table, pinhole_frame)


def render_checkerboard_frame(intrinsics: CameraIntrinsics, square_px: int = 60,
                              dark: int = 40, light: int = 220) -> RasterFrame:
    """Straight-edged checkerboard pattern in the pinhole (undistorted) domain."""
    if square_px < 2:
        raise DimensionError("squares must be at least 2 px")
    gx, gy = np.meshgrid(np.arange(intrinsics.width) // square_px,
                         np.arange(intrinsics.height) // square_px)
    pattern = np.where((gx + gy) % 2 == 0, light, dark).astype(np.uint8)
    return RasterFrame(pattern[:, :, np.newaxis])


# --------------------------------------------------------------------------
# Checkerboard calibration data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoardSpec:
    """Checkerboard corner grid: rows x cols corners, square size in mm."""

    rows: int = 7
    cols: int = 10
    square_mm: float = 15.0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise DimensionError("board needs at least a 2x2 corner grid")
        if self.square_mm <= 0:
            raise DimensionError("square size must be > 0")

    def points(self) -> np.ndarray:
        """(rows*cols, 3) corner coordinates in mm, centered on the board."""
        cc, rr = np.meshgrid(np.arange(self.cols), np.arange(self.rows))
        x = (cc.ravel() - (self.cols - 1) / 2.0) * self.square_mm
        y = (rr.ravel() - (self.rows - 1) / 2.0) * self.square_mm
        return np.column_stack([x, y, np.zeros(x.size)])


def _project_board(board_points: np.ndarray, pose: ViewExtrinsics,
                   intrinsics: CameraIntrinsics) -> np.ndarray:
    rot = Rotation.from_rotvec(pose.rotation).as_matrix()
    cam = board_points @ rot.T + np.asarray(pose.translation)
    if np.any(cam[:, 2] <= 0):
        raise GeometryError("board point behind the camera")
    x = cam[:, 0] / cam[:, 2]
    y = cam[:, 1] / cam[:, 2]
    u, v = _distort_arrays(x, y, intrinsics)
    return np.column_stack([u, v])


def synth_checkerboard_views(board: BoardSpec, intrinsics: CameraIntrinsics,
                             poses: list[ViewExtrinsics],
                             corner_noise_sigma: float = 0.0,
                             seed: int = 0) -> list[CalibrationView]:
    """Project board corners through the fisheye model for each pose.

    The noise-free projection of every corner must land inside the image;
    otherwise the offending view is rejected by index. Corner noise is
    i.i.d. Gaussian, deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    points = board.points()
    views = []
    for index, pose in enumerate(poses):
        try:
            pixels = _project_board(points, pose, intrinsics)
        except GeometryError as exc:
            raise GeometryError(f"view {index} rejected: {exc}") from exc
        if (np.any(pixels[:, 0] < 0) or np.any(pixels[:, 0] > intrinsics.width - 1)
                or np.any(pixels[:, 1] < 0) or np.any(pixels[:, 1] > intrinsics.height - 1)):
            raise GeometryError(f"view {index} rejected: corner projects outside the image")
        if corner_noise_sigma > 0:
            pixels = pixels + rng.normal(0.0, corner_noise_sigma, pixels.shape)
        views.append(CalibrationView(points, pixels))
    return views


_PLACEMENT_TARGETS = ((-1, -1), (1, -1), (-1, 1), (1, 1),
                      (0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))


def sample_checkerboard_poses(board: BoardSpec, intrinsics: CameraIntrinsics,
                              count: int, max_tilt_deg: float = 30.0,
                              seed: int = 0) -> list[ViewExtrinsics]:
    """Rejection-sample poses whose corners all project inside the image.

    Placements cycle through a 3x3 grid of image regions with the board
    close enough to fill most of the view: the distortion polynomial is
    only well conditioned when corner observations reach deep into the
    periphery, so the sampler covers the full field the way a careful
    calibration session would. Tilts are uniform in [8, max_tilt_deg]
    degrees. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    points = board.points()
    board_width = (board.cols - 1) * board.square_mm
    f_mean = 0.5 * (intrinsics.f_x + intrinsics.f_y)
    z0 = f_mean * board_width / (0.5 * intrinsics.width)
    poses: list[ViewExtrinsics] = []
    attempts = 0
    while len(poses) < count:
        attempts += 1
        if attempts > 25_000 * count:
            raise GeometryError("could not sample enough valid checkerboard poses")
        tx, ty = _PLACEMENT_TARGETS[len(poses) % len(_PLACEMENT_TARGETS)]
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = math.radians(rng.uniform(8.0, max_tilt_deg))
        z = z0 * rng.uniform(0.42, 0.58)
        jitter = rng.uniform(-0.03, 0.03, 2)
        offset = (np.array([tx * 0.36, ty * 0.27]) + jitter) * z
        pose = ViewExtrinsics(tuple(axis * angle), (offset[0], offset[1], z))
        try:
            pixels = _project_board(points, pose, intrinsics)
        except GeometryError:
            continue
        margin = 2.0
        if (pixels[:, 0].min() >= margin and pixels[:, 0].max() <= intrinsics.width - 1 - margin
                and pixels[:, 1].min() >= margin
                and pixels[:, 1].max() <= intrinsics.height - 1 - margin):
            poses.append(pose)
    return poses


def save_wear_model(wear: WearModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(wear.to_dict(), indent=2) + "\n")


def load_wear_model(path: str | Path) -> WearModel:
    return WearModel.from_dict(json.loads(Path(path).read_text()))


def save_scene(scene: GelScene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2) + "\n")


def load_scene(path: str | Path) -> GelScene:
    return GelScene.from_dict(json.loads(Path(path).read_text()))
