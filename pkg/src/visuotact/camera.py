"""Fisheye camera model: projection, undistortion, and intrinsic calibration.

The projection follows the equidistant fisheye model with a polynomial
distortion term. For a pinhole-normalized ray direction (x, y) = (X/Z, Y/Z):

    r       = sqrt(x^2 + y^2)
    theta   = arctan(r)
    theta_d = theta * (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8)
    pixel   = (f_x * (theta_d / r) * x + c_x,  f_y * (theta_d / r) * y + c_y)

so the distorted pixel radius encodes the (polynomially corrected) incidence
angle. Undistortion inverts the polynomial with Newton's method and converts
the recovered angle back to the pinhole plane via tan(theta).

Full-image undistortion resamples through a remap table built once per
(input, output) intrinsics pair and cached, because the real-time budget
does not allow per-frame trigonometry.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (ConvergenceError, DimensionError, DomainError,
                     InsufficientDataError, NumericalError)
from .frames import PixelCoord, RasterFrame
from .resample import RemapTable, build_remap, remap_frame

NEWTON_MAX_ITERATIONS = 20
NEWTON_TOLERANCE = 1e-10


@dataclass(frozen=True)
class CameraIntrinsics:
    """Fisheye intrinsics: focal lengths, principal point, distortion, size."""

    f_x: float
    f_y: float
    c_x: float
    c_y: float
    k: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.f_x > 0 and self.f_y > 0):
            raise DimensionError(f"focal lengths must be positive, got ({self.f_x}, {self.f_y})")
        if not (0 <= self.c_x < self.width and 0 <= self.c_y < self.height):
            raise DimensionError(
                f"principal point ({self.c_x}, {self.c_y}) outside image "
                f"{self.width}x{self.height}")
        if len(self.k) != 4:
            raise DimensionError(f"expected 4 distortion coefficients, got {len(self.k)}")
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.width, self.height)

    def cache_key(self) -> tuple:
        return (self.f_x, self.f_y, self.c_x, self.c_y, self.k, self.width, self.height)

    def to_dict(self) -> dict:
        return {"f_x": self.f_x, "f_y": self.f_y, "c_x": self.c_x, "c_y": self.c_y,
                "k": list(self.k), "width": self.width, "height": self.height}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(f_x=float(d["f_x"]), f_y=float(d["f_y"]),
                                c_x=float(d["c_x"]), c_y=float(d["c_y"]),
                                k=tuple(float(v) for v in d["k"]),
                                width=int(d["width"]), height=int(d["height"]))


def save_intrinsics(intrinsics: CameraIntrinsics, path: str | Path) -> None:
    Path(path).write_text(json.dumps(intrinsics.to_dict(), indent=2) + "\n")


def load_intrinsics(path: str | Path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(json.loads(Path(path).read_text()))


def _theta_d(theta, k):
    t2 = theta * theta
    return theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))


def _theta_d_derivative(theta, k):
    t2 = theta * theta
    return 1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])))


def _distort_arrays(x: np.ndarray, y: np.ndarray,
                    intrinsics: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward model on pinhole-normalized coordinates."""
    r = np.hypot(x, y)
    theta = np.arctan(r)
    theta_d = _theta_d(theta, intrinsics.k)
    # The theta_d / r scale tends to 1 as r -> 0.
    scale = np.where(r > 0.0, np.divide(theta_d, r, out=np.ones_like(r), where=r > 0.0), 1.0)
    return (intrinsics.f_x * scale * x + intrinsics.c_x,
            intrinsics.f_y * scale * y + intrinsics.c_y)


def distort_point(undistorted_normalized: tuple[float, float],
                  intrinsics: CameraIntrinsics) -> PixelCoord:
    """Project a pinhole-normalized coordinate to a distorted pixel."""
    x, y = float(undistorted_normalized[0]), float(undistorted_normalized[1])
    u, v = _distort_arrays(np.float64(x), np.float64(y), intrinsics)
    return PixelCoord(float(u), float(v))


def _solve_theta(theta_d: float, k: tuple[float, float, float, float]) -> float:
    """Invert theta_d = theta * (1 + k1 theta^2 + ...) with Newton's method."""
    theta = theta_d
    for _ in range(NEWTON_MAX_ITERATIONS):
        residual = _theta_d(theta, k) - theta_d
        if abs(residual) < NEWTON_TOLERANCE:
            return theta
        derivative = _theta_d_derivative(theta, k)
        if derivative == 0.0:
            break
        step = residual / derivative
        # Clamp steps so a locally flat polynomial cannot fling the iterate.
        step = max(min(step, 0.5), -0.5)
        theta = theta - step
        if theta < 0.0:
            theta = 0.0
    residual = _theta_d(theta, k) - theta_d
    if abs(residual) < NEWTON_TOLERANCE:
        return theta
    raise NumericalError(
        f"distortion polynomial inversion did not converge for theta_d={theta_d}",
        residual=residual)


def _undistort_arrays(x: np.ndarray, y: np.ndarray, intrinsics: CameraIntrinsics,
                      iterations: int = NEWTON_MAX_ITERATIONS
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized pixel-grid undistortion; returns (x_u, y_u, valid mask).

    Points whose Newton solve fails or whose incidence angle reaches pi/2
    are flagged invalid instead of raising; image-level callers blank them.
    """
    x_n = (np.asarray(x, dtype=np.float64) - intrinsics.c_x) / intrinsics.f_x
    y_n = (np.asarray(y, dtype=np.float64) - intrinsics.c_y) / intrinsics.f_y
    r_d = np.hypot(x_n, y_n)
    k = intrinsics.k
    theta = r_d.copy()
    for _ in range(iterations):
        residual = _theta_d(theta, k) - r_d
        derivative = _theta_d_derivative(theta, k)
        step = np.where(derivative != 0.0, residual / np.where(derivative == 0.0, 1.0, derivative), 0.0)
        theta = np.maximum(theta - np.clip(step, -0.5, 0.5), 0.0)
    valid = (np.abs(_theta_d(theta, k) - r_d) < 1e-8) & (theta < math.pi / 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r_d > 0.0, np.tan(np.minimum(theta, math.pi / 2 - 1e-9)) / np.where(r_d == 0.0, 1.0, r_d), 1.0)
    return (intrinsics.f_x * scale * x_n + intrinsics.c_x,
            intrinsics.f_y * scale * y_n + intrinsics.c_y,
            valid)


def undistort_point(distorted: PixelCoord | tuple[float, float],
                    intrinsics: CameraIntrinsics) -> PixelCoord:
    """Map a distorted pixel to its undistorted (pinhole-image) pixel.

    The undistorted image shares the same focal lengths and principal point.
    """
    x_n = (float(distorted[0]) - intrinsics.c_x) / intrinsics.f_x
    y_n = (float(distorted[1]) - intrinsics.c_y) / intrinsics.f_y
    r_d = math.hypot(x_n, y_n)
    if r_d == 0.0:
        return PixelCoord(intrinsics.c_x, intrinsics.c_y)
    theta = _solve_theta(r_d, intrinsics.k)
    if theta >= math.pi / 2:
        raise DomainError(
            f"pixel {tuple(distorted)} maps to incidence angle {theta:.4f} rad >= pi/2")
    scale = math.tan(theta) / r_d
    return PixelCoord(intrinsics.f_x * scale * x_n + intrinsics.c_x,
                      intrinsics.f_y * scale * y_n + intrinsics.c_y)


_REMAP_CACHE: dict[tuple, RemapTable] = {}
_REMAP_LOCK = threading.Lock()


def undistortion_remap(intrinsics: CameraIntrinsics,
                       output_intrinsics: CameraIntrinsics) -> RemapTable:
    """Remap table sending each undistorted output pixel to its fisheye source.

    Output pixels are interpreted as a pinhole image under
    ``output_intrinsics``; the source location is their forward projection
    through ``intrinsics``. Tables are cached per intrinsics pair.
    """
    key = (intrinsics.cache_key(), output_intrinsics.cache_key())
    table = _REMAP_CACHE.get(key)
    if table is not None:
        return table
    out_w, out_h = output_intrinsics.image_size
    u = (np.arange(out_w, dtype=np.float64) - output_intrinsics.c_x) / output_intrinsics.f_x
    v = (np.arange(out_h, dtype=np.float64) - output_intrinsics.c_y) / output_intrinsics.f_y
    gx, gy = np.meshgrid(u, v)
    src_x, src_y = _distort_arrays(gx, gy, intrinsics)
    table = build_remap(src_x, src_y, intrinsics.width, intrinsics.height)
    with _REMAP_LOCK:
        return _REMAP_CACHE.setdefault(key, table)


def undistort_image(frame: RasterFrame, intrinsics: CameraIntrinsics,
                    output_intrinsics: CameraIntrinsics | None = None) -> RasterFrame:
    """Resample a fisheye frame into the pinhole view of ``output_intrinsics``.

    Source locations outside the input frame produce 0.
    """
    if frame.size != intrinsics.image_size:
        raise DimensionError(
            f"frame size {frame.size} does not match intrinsics {intrinsics.image_size}")
    if output_intrinsics is None:
        output_intrinsics = intrinsics
    return remap_frame(undistortion_remap(intrinsics, output_intrinsics), frame)


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewExtrinsics:
    """Board-to-camera pose: axis-angle rotation (rad) and translation (mm)."""

    rotation: tuple[float, float, float]
    translation: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "rotation", tuple(float(v) for v in self.rotation))
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        if np.linalg.norm(self.rotation) >= math.pi:
            raise DimensionError("rotation magnitude must be < pi")
        if self.translation[2] <= 0:
            raise DimensionError("board must lie in front of the camera (t_z > 0)")


@dataclass(frozen=True, eq=False)
class CalibrationView:
    """Planar-board correspondences: (X, Y, 0) in mm -> observed pixel."""

    board_points: np.ndarray   # (N, 3), z == 0
    pixels: np.ndarray         # (N, 2)

    def __post_init__(self):
        board = np.asarray(self.board_points, dtype=np.float64)
        pix = np.asarray(self.pixels, dtype=np.float64)
        if board.ndim != 2 or board.shape[1] != 3:
            raise DimensionError(f"board points must be (N, 3), got {board.shape}")
        if pix.shape != (board.shape[0], 2):
            raise DimensionError("pixels must pair one-to-one with board points")
        if board.shape[0] < 4:
            raise InsufficientDataError(
                f"a calibration view needs >= 4 correspondences, got {board.shape[0]}")
        if np.any(board[:, 2] != 0.0):
            raise DimensionError("board points must be planar with z == 0")
        centered = board[:, :2] - board[:, :2].mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise DimensionError("board points must be non-collinear")
        object.__setattr__(self, "board_points", board)
        object.__setattr__(self, "pixels", pix)

    def __len__(self) -> int:
        return self.board_points.shape[0]


@dataclass(frozen=True)
class CalibrationResult:
    intrinsics: CameraIntrinsics
    extrinsics: tuple[ViewExtrinsics, ...]
    rms_reprojection_error: float   # per-coordinate RMS, pixels
    iterations: int

    def __post_init__(self):
        if self.rms_reprojection_error < 0:
            raise DimensionError("RMS must be non-negative")


def save_views(views: list[CalibrationView], path: str | Path) -> None:
    """Write correspondence views as JSON lines: {board: [[X,Y,0]...], pixels: [[u,v]...]}."""
    with open(path, "w", encoding="utf-8") as fh:
        for view in views:
            fh.write(json.dumps({"board": view.board_points.tolist(),
                                 "pixels": view.pixels.tolist()}) + "\n")


def load_views(path: str | Path) -> list[CalibrationView]:
    views = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            views.append(CalibrationView(np.asarray(record["board"], dtype=np.float64),
                                         np.asarray(record["pixels"], dtype=np.float64)))
    return views


def _default_initial_intrinsics(image_size: tuple[int, int]) -> CameraIntrinsics:
    """Seed f from the image diagonal under a 120-degree field-of-view prior."""
    width, height = image_size
    half_diag = 0.5 * math.hypot(width, height)
    f0 = half_diag / math.radians(60.0)
    return CameraIntrinsics(f_x=f0, f_y=f0, c_x=width / 2.0, c_y=height / 2.0,
                            k=(0.0, 0.0, 0.0, 0.0), width=width, height=height)


def _normalize_2d(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: zero mean, mean distance sqrt(2)."""
    mean = points.mean(axis=0)
    shifted = points - mean
    dist = np.mean(np.linalg.norm(shifted, axis=1))
    scale = math.sqrt(2.0) / dist if dist > 0 else 1.0
    transform = np.array([[scale, 0.0, -scale * mean[0]],
                          [0.0, scale, -scale * mean[1]],
                          [0.0, 0.0, 1.0]])
    normalized = shifted * scale
    return normalized, transform


def _planar_homography(board_xy: np.ndarray, normalized_pix: np.ndarray) -> np.ndarray:
    """DLT homography mapping (X, Y, 1) board coords to normalized image coords."""
    src, t_src = _normalize_2d(board_xy)
    dst, t_dst = _normalize_2d(normalized_pix)
    n = src.shape[0]
    rows = np.zeros((2 * n, 9))
    rows[0::2, 0:2] = src
    rows[0::2, 2] = 1.0
    rows[0::2, 6:8] = -dst[:, 0:1] * src
    rows[0::2, 8] = -dst[:, 0]
    rows[1::2, 3:5] = src
    rows[1::2, 5] = 1.0
    rows[1::2, 6:8] = -dst[:, 1:2] * src
    rows[1::2, 8] = -dst[:, 1]
    _, _, vt = np.linalg.svd(rows)
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ h_norm @ t_src
    return h / h[2, 2]


def _extrinsics_from_homography(h: np.ndarray) -> ViewExtrinsics:
    """Decompose a board-plane homography (in normalized coords) into a pose."""
    h1, h2, h3 = h[:, 0], h[:, 1], h[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    if h3[2] * lam < 0:
        lam = -lam
    r1 = lam * h1
    r2 = lam * h2
    r3 = np.cross(r1, r2)
    rough = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(rough)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    t = lam * h3
    rotvec = Rotation.from_matrix(rot).as_rotvec()
    return ViewExtrinsics(tuple(rotvec), tuple(t))


def _initial_extrinsics(view: CalibrationView,
                        intrinsics: CameraIntrinsics) -> ViewExtrinsics:
    normalized = np.empty_like(view.pixels)
    for i, (u, v) in enumerate(view.pixels):
        try:
            ux, uy = undistort_point(PixelCoord(u, v), intrinsics)
        except (NumericalError, DomainError):
            # Fall back to the raw normalized pixel; LM refines from there.
            ux, uy = u, v
        normalized[i, 0] = (ux - intrinsics.c_x) / intrinsics.f_x
        normalized[i, 1] = (uy - intrinsics.c_y) / intrinsics.f_y
    h = _planar_homography(view.board_points[:, :2], normalized)
    return _extrinsics_from_homography(h)


def _pack_parameters(intrinsics: CameraIntrinsics,
                     extrinsics: list[ViewExtrinsics]) -> np.ndarray:
    head = [intrinsics.f_x, intrinsics.f_y, intrinsics.c_x, intrinsics.c_y, *intrinsics.k]
    tail = []
    for ext in extrinsics:
        tail.extend(ext.rotation)
        tail.extend(ext.translation)
    return np.asarray(head + tail, dtype=np.float64)


class _ResidualModel:
    """Vectorized reprojection residuals for all views at once."""

    def __init__(self, views: list[CalibrationView], image_size: tuple[int, int]):
        self.image_size = image_size
        self.n_views = len(views)
        self.board = np.concatenate([v.board_points for v in views], axis=0)
        self.observed = np.concatenate([v.pixels for v in views], axis=0)
        self.view_index = np.concatenate(
            [np.full(len(v), i, dtype=np.int64) for i, v in enumerate(views)])
        self.n_points = self.board.shape[0]

    def residuals(self, params: np.ndarray) -> np.ndarray:
        f_x, f_y, c_x, c_y = params[0:4]
        k = (params[4], params[5], params[6], params[7])
        pose = params[8:].reshape(self.n_views, 6)
        rot = Rotation.from_rotvec(pose[:, 0:3]).as_matrix()     # (V, 3, 3)
        cam = np.einsum("nij,nj->ni", rot[self.view_index], self.board)
        cam += pose[self.view_index, 3:6]
        z = cam[:, 2]
        z = np.where(np.abs(z) < 1e-12, 1e-12, z)
        x = cam[:, 0] / z
        y = cam[:, 1] / z
        r = np.hypot(x, y)
        theta = np.arctan(r)
        theta_d = _theta_d(theta, k)
        scale = np.where(r > 0.0, np.divide(theta_d, r, out=np.ones_like(r), where=r > 0.0), 1.0)
        u = f_x * scale * x + c_x
        v = f_y * scale * y + c_y
        return np.column_stack([u, v]).ravel() - self.observed.ravel()


def _central_difference_jacobian(fun, x: np.ndarray, base_step: float = 1e-6) -> np.ndarray:
    """Central finite differences with step 1e-6 relative to parameter scale."""
    n = x.size
    r0 = fun(x)
    jac = np.empty((r0.size, n))
    for i in range(n):
        h = base_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return jac


def calibrate(views: list[CalibrationView],
              init: CameraIntrinsics | None = None,
              max_iterations: int = 100,
              tolerance: float = 1e-8,
              image_size: tuple[int, int] | None = None) -> CalibrationResult:
    """Jointly fit intrinsics and per-view poses by Levenberg-Marquardt.

    Minimizes squared pixel reprojection error over {f_x, f_y, c_x, c_y,
    k1..k4} plus six pose parameters per view. Poses are initialized from a
    planar homography decomposition, the Jacobian uses central finite
    differences, and iteration stops when the gradient infinity-norm drops
    below ``tolerance`` or after ``max_iterations`` accepted steps.

    Raises InsufficientDataError for fewer than 3 views and ConvergenceError
    (with the best result so far attached) when 10 consecutive damping
    escalations fail to reduce the cost.
    """
    if len(views) < 3:
        raise InsufficientDataError(f"calibration needs >= 3 views, got {len(views)}")
    if init is None:
        if image_size is None:
            max_u = max(float(v.pixels[:, 0].max()) for v in views)
            max_v = max(float(v.pixels[:, 1].max()) for v in views)
            image_size = (int(math.ceil(max_u)) + 1, int(math.ceil(max_v)) + 1)
        init = _default_initial_intrinsics(image_size)

    extrinsics = [_initial_extrinsics(view, init) for view in views]
    model = _ResidualModel(views, init.image_size)
    x = _pack_parameters(init, extrinsics)

    def unpack(params: np.ndarray, iterations: int) -> CalibrationResult:
        intr = CameraIntrinsics(f_x=float(params[0]), f_y=float(params[1]),
                                c_x=float(params[2]), c_y=float(params[3]),
                                k=tuple(params[4:8]),
                                width=init.width, height=init.height)
        pose = params[8:].reshape(model.n_views, 6)
        exts = tuple(ViewExtrinsics(tuple(p[0:3]), tuple(p[3:6])) for p in pose)
        res = model.residuals(params)
        rms = float(np.sqrt(np.mean(res ** 2)))
        return CalibrationResult(intr, exts, rms, iterations)

    residual = model.residuals(x)
    cost = float(residual @ residual)
    mu = 0.0
    nu = 2.0
    accepted = 0
    stalled = False

    for _ in range(max_iterations):
        if stalled:
            break
        jac = _central_difference_jacobian(model.residuals, x)
        gradient = jac.T @ residual
        if np.max(np.abs(gradient)) < tolerance:
            break
        hessian = jac.T @ jac
        diag = np.diag(hessian).copy()
        diag[diag < 1e-12] = 1e-12
        if mu == 0.0:
            mu = 1e-3 * float(diag.max())

        stepped = False
        rejects_in_a_row = 0
        while not stepped:
            try:
                delta = np.linalg.solve(hessian + mu * np.diag(diag), -gradient)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                predicted = float(delta @ (mu * diag * delta - gradient))
                if predicted <= 1e-12 * max(cost, 1e-300):
                    # No meaningful reduction is even predicted: the iterate
                    # sits at the (noise-limited) minimum. Converged.
                    stalled = True
                    break
                x_new = x + delta
                residual_new = model.residuals(x_new)
                cost_new = float(residual_new @ residual_new)
            else:
                cost_new = np.inf
            if np.isfinite(cost_new) and cost_new < cost:
                rho = (cost - cost_new) / predicted
                x = x_new
                residual = residual_new
                cost = cost_new
                mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
                accepted += 1
                stepped = True
            else:
                mu *= nu
                nu *= 2.0
                rejects_in_a_row += 1
                if rejects_in_a_row >= 10:
                    raise ConvergenceError(
                        "Levenberg-Marquardt diverged: 10 consecutive damping "
                        "escalations failed to reduce the cost",
                        best=unpack(x, accepted))
    return unpack(x, accepted)
