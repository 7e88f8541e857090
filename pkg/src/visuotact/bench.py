"""Steady-state throughput benchmark of the perception pipeline.

Times the three per-frame stages (undistortion remap, ROI rectification,
contact enhancement) over synthetic 640x480 frames, after a warm-up that
builds the remap tables. PNG decode/encode deliberately stays outside the
timed region: the figure of merit is sensing throughput, not storage.

Stages are row-parallel; ``threads > 1`` splits the remap gathers across a
thread pool (numpy releases the GIL inside the kernels) without changing
results.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, undistortion_remap
from .enhance import EnhancementConfig, build_reference, enhance
from .errors import InsufficientDataError
from .frames import RasterFrame, quantize_u8
from .rectify import (PolygonMask, RoiSpec, estimate_affine,
                      rectification_remap)
from .resample import RemapTable, remap_frame, remap_plane_rows
from .synth import GelScene, Indenter, render_contact, render_reference

STAGES = ("undistort", "rectify", "enhance")


def default_bench_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(f_x=340.0, f_y=340.0, c_x=320.0, c_y=240.0,
                            k=(0.04, 0.0, 0.0, 0.0), width=640, height=480)


def default_bench_roi() -> RoiSpec:
    """Gel band in the middle of the frame mapped onto a 400x150 patch.

    The default patch keeps the 80x30 mm sensing-area aspect ratio at
    5 px/mm; it is a configurable default, not a physical constant.
    """
    mask = PolygonMask(((80, 140), (560, 140), (560, 340), (80, 340)), (640, 480))
    transform, _ = estimate_affine([((80, 140), (0, 0)),
                                    ((560, 140), (400, 0)),
                                    ((80, 340), (0, 150))])
    return RoiSpec(mask, transform, (0, 0, 400, 150))


@dataclass(frozen=True)
class BenchReport:
    frames: int
    threads: int
    fps: float
    total_seconds: float
    stage_mean_us: dict
    stage_p99_us: dict
    frame_mean_us: float
    frame_p99_us: float

    def to_dict(self) -> dict:
        return {"frames": self.frames, "threads": self.threads,
                "fps": self.fps, "total_seconds": self.total_seconds,
                "stage_mean_us": dict(self.stage_mean_us),
                "stage_p99_us": dict(self.stage_p99_us),
                "frame_mean_us": self.frame_mean_us,
                "frame_p99_us": self.frame_p99_us}


# Below this many output pixels the submission overhead outweighs the split.
_PARALLEL_MIN_PIXELS = 128 * 1024


def _threaded_remap(table: RemapTable, frame: RasterFrame,
                    pool: ThreadPoolExecutor, threads: int) -> RasterFrame:
    plane = frame.channel(0)
    out = np.empty((table.out_height, table.out_width), dtype=np.float32)
    bounds = np.linspace(0, table.out_height, threads + 1).astype(int)
    # The calling thread takes the first block; only the rest are submitted.
    futures = [pool.submit(remap_plane_rows, table, plane, int(lo), int(hi), out)
               for lo, hi in zip(bounds[1:-1], bounds[2:]) if hi > lo]
    remap_plane_rows(table, plane, int(bounds[0]), int(bounds[1]), out)
    wait(futures)
    for future in futures:
        future.result()
    return RasterFrame(quantize_u8(out)[:, :, np.newaxis], frame.timestamp_us)


def bench_pipeline(frames: int = 1000, threads: int = 1,
                   intrinsics: CameraIntrinsics | None = None,
                   roi: RoiSpec | None = None,
                   config: EnhancementConfig = EnhancementConfig(),
                   warmup: int = 50, seed: int = 0,
                   distinct_frames: int = 8) -> BenchReport:
    """Measure undistort+rectify+enhance throughput on synthetic frames."""
    if frames < 100:
        raise InsufficientDataError(
            f"benchmark needs >= 100 frames for a stable figure, got {frames}")
    if threads < 1:
        raise InsufficientDataError("threads must be >= 1")
    intrinsics = intrinsics or default_bench_intrinsics()
    roi = roi or default_bench_roi()
    scene = GelScene(intrinsics.width, intrinsics.height, 150, 0.3, 2.0)

    undistort_table = undistortion_remap(intrinsics, intrinsics)
    rectify_table = rectification_remap(roi)

    rng = np.random.default_rng(seed)
    inputs = []
    for i in range(distinct_frames):
        indenter = Indenter(center=(float(rng.uniform(200, 440)),
                                    float(rng.uniform(180, 300))),
                            radius=float(rng.uniform(20, 60)),
                            depth=float(rng.uniform(0.2, 0.5)))
        inputs.append(render_contact(scene, [indenter], seed=seed + i)[0])
    reference_raw = render_reference(scene, seed=seed)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def stage_undistort(frame: RasterFrame) -> RasterFrame:
        if pool is not None and undistort_table.idx.shape[1] >= _PARALLEL_MIN_PIXELS:
            return _threaded_remap(undistort_table, frame, pool, threads)
        return remap_frame(undistort_table, frame)

    def stage_rectify(frame: RasterFrame) -> RasterFrame:
        if pool is not None and rectify_table.idx.shape[1] >= _PARALLEL_MIN_PIXELS:
            return _threaded_remap(rectify_table, frame, pool, threads)
        return remap_frame(rectify_table, frame)

    reference = build_reference([stage_rectify(stage_undistort(reference_raw))],
                                config.alpha)

    try:
        for i in range(warmup):
            enhance(reference, stage_rectify(stage_undistort(inputs[i % len(inputs)])), config)

        stage_times = {name: np.empty(frames) for name in STAGES}
        frame_times = np.empty(frames)
        started = time.perf_counter()
        for i in range(frames):
            frame = inputs[i % len(inputs)]
            t0 = time.perf_counter()
            undistorted = stage_undistort(frame)
            t1 = time.perf_counter()
            rectified = stage_rectify(undistorted)
            t2 = time.perf_counter()
            enhance(reference, rectified, config)
            t3 = time.perf_counter()
            stage_times["undistort"][i] = t1 - t0
            stage_times["rectify"][i] = t2 - t1
            stage_times["enhance"][i] = t3 - t2
            frame_times[i] = t3 - t0
        total = time.perf_counter() - started
    finally:
        if pool is not None:
            pool.shutdown()

    return BenchReport(
        frames=frames, threads=threads,
        fps=frames / total, total_seconds=total,
        stage_mean_us={k: float(v.mean() * 1e6) for k, v in stage_times.items()},
        stage_p99_us={k: float(np.percentile(v, 99) * 1e6) for k, v in stage_times.items()},
        frame_mean_us=float(frame_times.mean() * 1e6),
        frame_p99_us=float(np.percentile(frame_times, 99) * 1e6))
