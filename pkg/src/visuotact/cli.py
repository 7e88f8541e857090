"""Command-line front door for the full tactile pipeline.

Subcommands mirror the processing stages plus the surrounding workflows:

  calibrate   correspondences (JSONL) -> intrinsics JSON
  undistort   fisheye PNG -> pinhole PNG
  roi         apply an RoiSpec: undistorted PNG -> rectified crop PNG
  enhance     rectified PNG + reference PNG -> 3-channel enhanced PNG
  pipeline    undistort + roi + enhance chained in one pass
  simulate    synthetic frames: contacts, checkerboard views, or wear series
  pretrain    contrastive alignment on a recorded episode
  soh         state-of-health curve from a wear series manifest
  pair        pair visual/tactile/joint streams into an episode
  bench       steady-state throughput of the perception stages

Exit codes: 0 success, 1 usage error, 2 validation/numerical error.
All randomized subcommands take ``--seed`` and are bit-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

# Relative config paths that do not exist locally are also tried against
# this directory, so fleets can share one calibration bundle.
CONFIG_DIR_ENV = "VISUOTACT_CONFIG_DIR"

import numpy as np

from . import __version__
from .align import (AlignmentConfig, JointVector, save_head, train_alignment,
                    write_metrics_csv)
from .bench import bench_pipeline, default_bench_intrinsics
from .camera import (calibrate, load_intrinsics, load_views, save_intrinsics,
                     save_views, undistort_image)
from .enhance import EnhancementConfig, build_reference, enhance
from .episodes import (DEFAULT_TOLERANCE_US, Episode, EpisodeMeta, StreamSample,
                       pair_streams, read_episode, write_episode)
from .errors import UsageError, VisuotactError
from .frames import read_png, to_gray, write_png
from .health import DEFAULT_FAILURE_THRESHOLD, evaluate_stream
from .rectify import load_roi_spec, rectify
from .synth import (BoardSpec, GelScene, Indenter, WearModel, degrade,
                    load_scene, load_wear_model, render_contact,
                    render_reference, sample_checkerboard_poses,
                    synth_checkerboard_views)


def config_hash(payload: dict) -> str:
    """Short stable hash over a canonical JSON serialization."""
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def resolve_config_path(path: str) -> str:
    """Resolve a config file argument, falling back to $VISUOTACT_CONFIG_DIR."""
    candidate = Path(path)
    if candidate.exists() or candidate.is_absolute():
        return str(candidate)
    config_dir = os.environ.get(CONFIG_DIR_ENV)
    if config_dir:
        fallback = Path(config_dir) / candidate
        if fallback.exists():
            return str(fallback)
    return str(candidate)


@dataclass(frozen=True)
class PipelineConfig:
    """Validated stage inputs for the chained pipeline command."""

    intrinsics_path: Path
    roi_path: Path
    reference_path: Path
    enhancement: EnhancementConfig

    def __post_init__(self):
        for path in (self.intrinsics_path, self.roi_path, self.reference_path):
            if not Path(path).exists():
                raise VisuotactError(f"config references a missing file: {path}")

    def hash(self) -> str:
        return config_hash({"intrinsics": str(self.intrinsics_path),
                            "roi": str(self.roi_path),
                            "reference": str(self.reference_path),
                            "alpha": self.enhancement.alpha,
                            "gain_dark": self.enhancement.gain_dark,
                            "gain_bright": self.enhancement.gain_bright})


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="visuotact",
                     description="Vision-based tactile sensing pipeline")
    parser.add_argument("--version", action="version", version=f"visuotact {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("calibrate", help="fit fisheye intrinsics from correspondences")
    p.add_argument("--views", required=True, help="correspondence JSONL file")
    p.add_argument("--out", required=True, help="output intrinsics JSON")
    p.add_argument("--image-size", default=None, help="WxH when no --init is given")
    p.add_argument("--init", default=None, help="initial intrinsics JSON")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-8)

    p = sub.add_parser("undistort", help="remove fisheye distortion from a frame")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--output-intrinsics", default=None)

    p = sub.add_parser("roi", help="rectify the gel region into its crop")
    p.add_argument("--roi", required=True, help="RoiSpec JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("enhance", help="difference-channel contact enhancement")
    p.add_argument("--ref", required=True, help="rectified no-contact reference PNG")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--gain-dark", type=float, default=1.0)
    p.add_argument("--gain-bright", type=float, default=1.0)

    p = sub.add_parser("pipeline", help="undistort + roi + enhance in one pass")
    p.add_argument("--intrinsics", required=True)
    p.add_argument("--roi", required=True)
    p.add_argument("--ref", required=True, help="rectified no-contact reference PNG")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--gain-dark", type=float, default=1.0)
    p.add_argument("--gain-bright", type=float, default=1.0)
    p.add_argument("--output-intrinsics", default=None)

    p = sub.add_parser("simulate", help="generate synthetic sensor data")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("contact", "checkerboard", "wear"),
                   default="contact")
    p.add_argument("--scene", default=None, help="GelScene JSON (default built in)")
    p.add_argument("--frames", type=int, default=16, help="contact frames to render")
    p.add_argument("--views", type=int, default=20, help="checkerboard views")
    p.add_argument("--intrinsics", default=None, help="intrinsics for checkerboard mode")
    p.add_argument("--corner-noise", type=float, default=0.0)
    p.add_argument("--wear", default=None, help="WearModel JSON (default: nominal)")
    p.add_argument("--cycles", type=int, default=4000, help="wear cycles to simulate")
    p.add_argument("--cadence", type=int, default=50, help="cycles between wear samples")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("pretrain", help="train the tactile alignment head")
    p.add_argument("--episode", required=True, help="episode directory or meta.json")
    p.add_argument("--out", required=True, help="trained head JSON")
    p.add_argument("--metrics", default=None, help="per-epoch metrics CSV")
    p.add_argument("--tau", type=float, default=0.07)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--bank-capacity", type=int, default=1024)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--embedding-dim", type=int, default=128)
    p.add_argument("--augment-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("soh", help="state-of-health curve from a wear manifest")
    p.add_argument("--manifest", required=True, help="JSONL of {cycle, reference, probe}")
    p.add_argument("--out", required=True, help="curve CSV")
    p.add_argument("--threshold", type=float, default=DEFAULT_FAILURE_THRESHOLD)

    p = sub.add_parser("pair", help="pair streams into an on-disk episode")
    p.add_argument("--visual", required=True, help="JSONL of {t_us, path}")
    p.add_argument("--tactile", required=True, help="JSONL of {t_us, path}")
    p.add_argument("--joints", required=True, help="JSONL of {t_us, joints:[7]}")
    p.add_argument("--out", required=True, help="episode root directory")
    p.add_argument("--episode-id", required=True)
    p.add_argument("--task", default="")
    p.add_argument("--robot", default="")
    p.add_argument("--sensor", default="")
    p.add_argument("--tolerance-us", type=int, default=DEFAULT_TOLERANCE_US)

    p = sub.add_parser("bench", help="throughput of undistort + rectify + enhance")
    p.add_argument("--frames", type=int, default=1000)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--intrinsics", default=None)
    p.add_argument("--roi", default=None)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    return parser


# --------------------------------------------------------------------------
# Subcommand implementations
# --------------------------------------------------------------------------

def _cmd_calibrate(args) -> int:
    views = load_views(args.views)
    init = load_intrinsics(args.init) if args.init else None
    image_size = None
    if args.image_size:
        w, h = args.image_size.lower().split("x")
        image_size = (int(w), int(h))
    result = calibrate(views, init=init, max_iterations=args.max_iterations,
                       tolerance=args.tolerance, image_size=image_size)
    save_intrinsics(result.intrinsics, args.out)
    print(f"rms_px={result.rms_reprojection_error:.6f} iterations={result.iterations} "
          f"views={len(views)}")
    return 0


def _cmd_undistort(args) -> int:
    intrinsics = load_intrinsics(resolve_config_path(args.intrinsics))
    output = (load_intrinsics(resolve_config_path(args.output_intrinsics))
              if args.output_intrinsics else None)
    frame = read_png(args.input)
    write_png(undistort_image(frame, intrinsics, output), args.out)
    return 0


def _cmd_roi(args) -> int:
    spec = load_roi_spec(resolve_config_path(args.roi))
    write_png(rectify(read_png(args.input), spec), args.out)
    return 0


def _enhance_frame(reference_frame, current_frame, alpha, gain_dark, gain_bright):
    config = EnhancementConfig(alpha=alpha, gain_dark=gain_dark, gain_bright=gain_bright)
    reference = build_reference([to_gray(reference_frame)], alpha)
    return enhance(reference, to_gray(current_frame), config)


def _cmd_enhance(args) -> int:
    out = _enhance_frame(read_png(resolve_config_path(args.ref)), read_png(args.input),
                         args.alpha, args.gain_dark, args.gain_bright)
    write_png(out, args.out)
    return 0


def _cmd_pipeline(args) -> int:
    intrinsics_path = resolve_config_path(args.intrinsics)
    roi_path = resolve_config_path(args.roi)
    ref_path = resolve_config_path(args.ref)
    config = PipelineConfig(Path(intrinsics_path), Path(roi_path), Path(ref_path),
                            EnhancementConfig(args.alpha, args.gain_dark, args.gain_bright))
    intrinsics = load_intrinsics(intrinsics_path)
    output = (load_intrinsics(resolve_config_path(args.output_intrinsics))
              if args.output_intrinsics else None)
    spec = load_roi_spec(roi_path)
    frame = read_png(args.input)
    undistorted = undistort_image(frame, intrinsics, output)
    rectified = rectify(undistorted, spec)
    enhanced = _enhance_frame(read_png(ref_path), rectified,
                              args.alpha, args.gain_dark, args.gain_bright)
    write_png(enhanced, args.out)
    print(f"config_hash={config.hash()}")
    return 0


def _default_scene() -> GelScene:
    return GelScene(640, 480, 150, 0.3, 0.0)


def _cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = load_scene(resolve_config_path(args.scene)) if args.scene else _default_scene()
    rng = np.random.default_rng(args.seed)

    if args.mode == "contact":
        (out_dir / "frames").mkdir(exist_ok=True)
        (out_dir / "masks").mkdir(exist_ok=True)
        with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
            for i in range(args.frames):
                count = int(rng.integers(1, 3))
                indenters = []
                for _ in range(count):
                    radius = float(rng.uniform(12, 50))
                    indenters.append(Indenter(
                        center=(float(rng.uniform(radius, scene.width - radius)),
                                float(rng.uniform(radius, scene.height - radius))),
                        radius=radius,
                        depth=float(rng.uniform(0.2, 0.6)),
                        profile="gaussian" if rng.random() < 0.5 else "spherical_cap"))
                frame, mask = render_contact(scene, indenters, seed=args.seed + i)
                frame_rel = f"frames/{i:06d}.png"
                mask_rel = f"masks/{i:06d}.png"
                write_png(frame, out_dir / frame_rel)
                write_png(mask.to_frame(), out_dir / mask_rel)
                fh.write(json.dumps({
                    "index": i, "frame": frame_rel, "mask": mask_rel,
                    "indenters": [{"center": list(ind.center), "radius": ind.radius,
                                   "depth": ind.depth, "profile": ind.profile}
                                  for ind in indenters]}) + "\n")
        print(f"wrote {args.frames} contact frames to {out_dir}")
        return 0

    if args.mode == "checkerboard":
        intrinsics = (load_intrinsics(resolve_config_path(args.intrinsics))
                      if args.intrinsics else default_bench_intrinsics())
        board = BoardSpec()
        poses = sample_checkerboard_poses(board, intrinsics, args.views, seed=args.seed)
        views = synth_checkerboard_views(board, intrinsics, poses,
                                         corner_noise_sigma=args.corner_noise,
                                         seed=args.seed)
        path = out_dir / "correspondences.jsonl"
        save_views(views, path)
        print(f"wrote {len(views)} views to {path}")
        return 0

    # wear mode: reference + probe pair every `cadence` cycles
    wear = load_wear_model(resolve_config_path(args.wear)) if args.wear else WearModel.nominal()
    probe = Indenter(center=(scene.width / 2.0, scene.height / 2.0),
                     radius=min(scene.width, scene.height) / 6.0, depth=0.5)
    (out_dir / "wear").mkdir(exist_ok=True)
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for cycle in range(0, args.cycles + 1, args.cadence):
            worn = degrade(scene, wear, cycle, seed=args.seed)
            reference = render_reference(worn, seed=args.seed + cycle)
            contact, _ = render_contact(worn, [probe], seed=args.seed + cycle)
            ref_rel = f"wear/ref_{cycle:06d}.png"
            probe_rel = f"wear/probe_{cycle:06d}.png"
            write_png(reference, out_dir / ref_rel)
            write_png(contact, out_dir / probe_rel)
            fh.write(json.dumps({"cycle": cycle, "reference": ref_rel,
                                 "probe": probe_rel}) + "\n")
    print(f"wrote wear series (0..{args.cycles} step {args.cadence}) to {out_dir}")
    return 0


def _cmd_pretrain(args) -> int:
    episode = read_episode(args.episode)
    pairs = [(r.visual, r.tactile, r.joints) for r in episode.records]
    config = AlignmentConfig(tau=args.tau, batch_size=args.batch_size,
                             bank_capacity=args.bank_capacity,
                             learning_rate=args.learning_rate, epochs=args.epochs,
                             seed=args.seed, feature_dim=args.feature_dim,
                             embedding_dim=args.embedding_dim,
                             augment_negative_fraction=args.augment_fraction)
    head, metrics = train_alignment(pairs, config)
    save_head(head, config.tau, config.seed, args.out)
    if args.metrics:
        write_metrics_csv(metrics, args.metrics)
    final = metrics[-1]
    print(f"epochs={final.epoch} loss={final.loss:.6f} "
          f"retrieval_top1={final.retrieval_top1:.4f}")
    return 0


def _cmd_soh(args) -> int:
    manifest = Path(args.manifest)
    base = manifest.parent

    def samples():
        with open(manifest, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                yield (int(row["cycle"]),
                       read_png(base / row["reference"]),
                       read_png(base / row["probe"]))

    failure_cycle = None
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("cycle,soh,uniformity,visibility,integrity\n")
        for cycle, metrics, soh in evaluate_stream(samples()):
            fh.write(f"{cycle},{soh:.4f},{metrics.illumination_uniformity:.6f},"
                     f"{metrics.deformation_visibility:.6f},"
                     f"{metrics.structural_integrity:.6f}\n")
            if failure_cycle is None and soh < args.threshold:
                failure_cycle = cycle
    print(f"failure_cycle={failure_cycle if failure_cycle is not None else 'none'}")
    return 0


def _load_stream(path: str, frame_stream: bool) -> list[StreamSample]:
    samples = []
    base = Path(path).parent
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if frame_stream:
                payload = read_png(base / row["path"], timestamp_us=int(row["t_us"]))
            else:
                payload = JointVector(tuple(row["joints"]))
            samples.append(StreamSample(int(row["t_us"]), payload))
    return samples


def _cmd_pair(args) -> int:
    visual = _load_stream(args.visual, frame_stream=True)
    tactile = _load_stream(args.tactile, frame_stream=True)
    joints = _load_stream(args.joints, frame_stream=False)
    records, dropped = pair_streams(visual, tactile, joints, args.tolerance_us)
    resolution = records[0].visual.size if records else (640, 480)
    meta = EpisodeMeta(
        episode_id=args.episode_id, task=args.task, robot=args.robot,
        sensor=args.sensor,
        config_hash=config_hash({"tolerance_us": args.tolerance_us,
                                 "resolution": list(resolution)}),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        resolution=resolution)
    manifest = write_episode(Episode(tuple(records), meta), args.out)
    print(f"records={len(records)} dropped_visual={dropped['visual']} "
          f"dropped_tactile={dropped['tactile']} dropped_joints={dropped['joints']} "
          f"manifest={manifest}")
    return 0


def _cmd_bench(args) -> int:
    intrinsics = (load_intrinsics(resolve_config_path(args.intrinsics))
                  if args.intrinsics else None)
    roi = load_roi_spec(resolve_config_path(args.roi)) if args.roi else None
    report = bench_pipeline(frames=args.frames, threads=args.threads,
                            intrinsics=intrinsics, roi=roi,
                            config=EnhancementConfig(alpha=args.alpha),
                            warmup=args.warmup, seed=args.seed)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "undistort": _cmd_undistort,
    "roi": _cmd_roi,
    "enhance": _cmd_enhance,
    "pipeline": _cmd_pipeline,
    "simulate": _cmd_simulate,
    "pretrain": _cmd_pretrain,
    "soh": _cmd_soh,
    "pair": _cmd_pair,
    "bench": _cmd_bench,
}


def dispatch(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:   # --help / --version
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VisuotactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
