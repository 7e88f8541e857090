"""Shared fixtures and synthetic-data builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from visuotact import CameraIntrinsics, JointVector, RasterFrame


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def smooth_frame(size: int = 64, seed: int = 0, components: int = 4) -> RasterFrame:
    """Deterministic smooth random field, full 0..255 range."""
    gen = np.random.default_rng(seed)
    xs = np.linspace(0, 2 * np.pi, size)
    gx, gy = np.meshgrid(xs, xs)
    field = np.zeros((size, size))
    for _ in range(components):
        fx, fy = gen.uniform(0.5, 3.0, 2)
        ph = gen.uniform(0, 2 * np.pi, 2)
        field += gen.uniform(0.5, 1.0) * np.sin(fx * gx + ph[0]) * np.sin(fy * gy + ph[1])
    field = (field - field.min()) / (field.max() - field.min())
    return RasterFrame((field * 255).astype(np.uint8)[:, :, np.newaxis])


def correlated_pairs(n: int = 256, size: int = 64, seed: int = 0):
    """Aligned dataset: the tactile frame is a fixed function (vertical flip)
    of its visual frame, plus a per-sample joint vector."""
    gen = np.random.default_rng(seed)
    pairs = []
    for i in range(n):
        visual = smooth_frame(size=size, seed=seed * 100003 + i)
        tactile = RasterFrame(np.ascontiguousarray(visual.data[::-1, :]))
        joints = JointVector(tuple(np.clip(gen.uniform(-1, 1, 7), -1, 1)))
        pairs.append((visual, tactile, joints))
    return pairs


@pytest.fixture
def narrow_fov_intrinsics():
    return CameraIntrinsics(f_x=2000.0, f_y=2000.0, c_x=32.0, c_y=32.0,
                            k=(0.0, 0.0, 0.0, 0.0), width=64, height=64)


@pytest.fixture
def wide_intrinsics():
    return CameraIntrinsics(f_x=320.0, f_y=320.0, c_x=320.0, c_y=240.0,
                            k=(0.05, 0.0, 0.0, 0.0), width=640, height=480)


def edge_crossings(frame, boundary_y: int, x_range, window: int):
    """Subpixel y positions where each column crosses mid-gray near boundary_y.

    Independent straightness oracle for checkerboard boundaries: linear
    interpolation of the intensity crossing closest to the nominal row.
    """
    img = frame.channel(0).astype(float)
    mid = 130.0
    xs, ys = [], []
    for x in x_range:
        lo = max(boundary_y - window, 1)
        hi = min(boundary_y + window, frame.height - 1)
        col = img[lo:hi, x]
        sign = np.sign(col - mid)
        candidates = [i for i in range(len(sign) - 1)
                      if sign[i] != sign[i + 1] and sign[i] != 0 and col[i] != col[i + 1]]
        if not candidates:
            continue
        best = min(candidates, key=lambda i: abs(lo + i - boundary_y))
        frac = (mid - col[best]) / (col[best + 1] - col[best])
        xs.append(x)
        ys.append(lo + best + frac)
    return np.asarray(xs), np.asarray(ys)


def line_fit_rms(xs: np.ndarray, ys: np.ndarray) -> float:
    coeff = np.polyfit(xs, ys, 1)
    residual = ys - np.polyval(coeff, xs)
    return float(np.sqrt(np.mean(residual ** 2)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and "::" in nodeid:
                parts = nodeid.split("::")
                label = parts[-2].replace("TestCriterion", "")
                digits = "".join(c for c in label if c.isdigit())
                rows.append((int(digits or 0), parts[-1], outcome))
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion, name, outcome in sorted(rows):
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{flag}  criterion {criterion} :: {name}")
