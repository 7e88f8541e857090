import json
import subprocess
import sys

import numpy as np
import pytest

from visuotact import (CameraIntrinsics, GelScene, Indenter, RasterFrame,
                       read_episode, read_png, rectify, render_contact,
                       render_reference, save_intrinsics, save_roi_spec,
                       undistort_image, write_png)
from visuotact.bench import default_bench_intrinsics, default_bench_roi
from visuotact.cli import dispatch
from visuotact.camera import save_views
from visuotact.synth import (BoardSpec, sample_checkerboard_poses,
                             synth_checkerboard_views)


@pytest.fixture
def workdir(tmp_path):
    intrinsics = default_bench_intrinsics()
    save_intrinsics(intrinsics, tmp_path / "intr.json")
    save_roi_spec(default_bench_roi(), tmp_path / "roi.json")
    scene = GelScene(640, 480, 150, 0.3, 0.0)
    raw_ref = render_reference(scene, seed=0)
    raw_contact, _ = render_contact(
        scene, [Indenter((320.0, 240.0), 50.0, 0.4)], seed=0)
    write_png(raw_ref, tmp_path / "raw_ref.png")
    write_png(raw_contact, tmp_path / "raw_contact.png")
    # rectified-domain reference for the enhance stage
    rect_ref = rectify(undistort_image(raw_ref, intrinsics), default_bench_roi())
    write_png(rect_ref, tmp_path / "ref.png")
    return tmp_path


class TestDispatchContract:
    def test_no_arguments_usage_error(self, capsys):
        assert dispatch([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert dispatch(["frobnicate"]) == 1

    def test_help_exits_zero(self, capsys):
        assert dispatch(["--help"]) == 0
        assert "COMMAND" in capsys.readouterr().out

    def test_console_entry_point(self):
        result = subprocess.run([sys.executable, "-m", "visuotact.cli", "--help"],
                                capture_output=True, text=True)
        assert result.returncode == 0

    def test_validation_error_exit_2(self, workdir, capsys):
        small = RasterFrame.zeros(32, 32)
        write_png(small, workdir / "small.png")
        code = dispatch(["enhance", "--ref", str(workdir / "ref.png"),
                         "--in", str(workdir / "small.png"),
                         "--out", str(workdir / "x.png")])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestStageCommands:
    def test_pipeline_matches_individual_stages(self, workdir, capsys):
        base = [str(workdir / p) for p in
                ("intr.json", "roi.json", "ref.png", "raw_contact.png")]
        assert dispatch(["undistort", "--intrinsics", base[0],
                         "--in", base[3], "--out", str(workdir / "und.png")]) == 0
        assert dispatch(["roi", "--roi", base[1],
                         "--in", str(workdir / "und.png"),
                         "--out", str(workdir / "rect.png")]) == 0
        assert dispatch(["enhance", "--ref", base[2],
                         "--in", str(workdir / "rect.png"),
                         "--out", str(workdir / "enh_steps.png")]) == 0
        assert dispatch(["pipeline", "--intrinsics", base[0], "--roi", base[1],
                         "--ref", base[2], "--in", base[3],
                         "--out", str(workdir / "enh_direct.png")]) == 0
        direct = (workdir / "enh_direct.png").read_bytes()
        steps = (workdir / "enh_steps.png").read_bytes()
        assert direct == steps
        out = read_png(workdir / "enh_direct.png")
        assert out.channels == 3
        assert "config_hash=" in capsys.readouterr().out

    def test_idempotent_outputs(self, workdir):
        args = ["undistort", "--intrinsics", str(workdir / "intr.json"),
                "--in", str(workdir / "raw_contact.png"),
                "--out", str(workdir / "u1.png")]
        assert dispatch(args) == 0
        first = (workdir / "u1.png").read_bytes()
        assert dispatch(args) == 0
        assert (workdir / "u1.png").read_bytes() == first


class TestCalibrateCommand:
    def test_calibrate_from_simulated_views(self, tmp_path, capsys):
        true = CameraIntrinsics(320.0, 320.0, 320.0, 240.0, (0.05, 0, 0, 0), 640, 480)
        board = BoardSpec()
        poses = sample_checkerboard_poses(board, true, 4, seed=0)
        views = synth_checkerboard_views(board, true, poses, 0.0, 0)
        save_views(views, tmp_path / "corr.jsonl")
        code = dispatch(["calibrate", "--views", str(tmp_path / "corr.jsonl"),
                         "--out", str(tmp_path / "fit.json"),
                         "--image-size", "640x480"])
        assert code == 0
        fitted = json.loads((tmp_path / "fit.json").read_text())
        assert abs(fitted["f_x"] - 320.0) / 320.0 < 0.01
        assert "rms_px=" in capsys.readouterr().out

    def test_insufficient_views_exit_2(self, tmp_path):
        true = CameraIntrinsics(320.0, 320.0, 320.0, 240.0, (0.05, 0, 0, 0), 640, 480)
        board = BoardSpec()
        poses = sample_checkerboard_poses(board, true, 2, seed=0)
        save_views(synth_checkerboard_views(board, true, poses, 0.0, 0),
                   tmp_path / "corr.jsonl")
        assert dispatch(["calibrate", "--views", str(tmp_path / "corr.jsonl"),
                         "--out", str(tmp_path / "fit.json")]) == 2


class TestSimulateCommands:
    def test_contact_mode_outputs(self, tmp_path):
        out = tmp_path / "sim"
        assert dispatch(["simulate", "--out", str(out), "--frames", "3",
                         "--seed", "5"]) == 0
        manifest = (out / "manifest.jsonl").read_text().strip().splitlines()
        assert len(manifest) == 3
        row = json.loads(manifest[0])
        assert (out / row["frame"]).exists()
        assert (out / row["mask"]).exists()
        frame = read_png(out / row["frame"])
        assert frame.size == (640, 480)

    def test_checkerboard_mode_feeds_calibrate(self, tmp_path):
        out = tmp_path / "sim"
        assert dispatch(["simulate", "--out", str(out), "--mode", "checkerboard",
                         "--views", "4", "--seed", "1"]) == 0
        assert dispatch(["calibrate", "--views", str(out / "correspondences.jsonl"),
                         "--out", str(tmp_path / "fit.json"),
                         "--image-size", "640x480"]) == 0

    def test_wear_mode_then_soh(self, tmp_path, capsys):
        out = tmp_path / "wear"
        assert dispatch(["simulate", "--out", str(out), "--mode", "wear",
                         "--cycles", "2400", "--cadence", "400", "--seed", "0"]) == 0
        code = dispatch(["soh", "--manifest", str(out / "manifest.jsonl"),
                         "--out", str(tmp_path / "curve.csv")])
        assert code == 0
        printed = capsys.readouterr().out
        assert "failure_cycle=" in printed
        lines = (tmp_path / "curve.csv").read_text().strip().splitlines()
        assert lines[0] == "cycle,soh,uniformity,visibility,integrity"
        assert len(lines) == 8   # cycles 0..2400 step 400, plus header
        first = lines[1].split(",")
        assert float(first[1]) == 100.0


def write_stream_files(tmp_path, n=24):
    gen = np.random.default_rng(0)
    period = 33_333
    vis_dir = tmp_path / "vis"
    tac_dir = tmp_path / "tac"
    vis_dir.mkdir()
    tac_dir.mkdir()
    visual_lines, tactile_lines, joint_lines = [], [], []
    for i in range(n):
        t = 1000 + i * period
        vframe = RasterFrame(gen.integers(0, 256, (48, 64, 1), dtype=np.uint8))
        tframe = RasterFrame(gen.integers(0, 256, (48, 64, 1), dtype=np.uint8))
        write_png(vframe, vis_dir / f"{i:04d}.png")
        write_png(tframe, tac_dir / f"{i:04d}.png")
        visual_lines.append(json.dumps({"t_us": t, "path": f"vis/{i:04d}.png"}))
        tactile_lines.append(json.dumps({"t_us": t + 900, "path": f"tac/{i:04d}.png"}))
        joint_lines.append(json.dumps({"t_us": t - 500,
                                       "joints": list(np.round(gen.uniform(-1, 1, 7), 4))}))
    (tmp_path / "visual.jsonl").write_text("\n".join(visual_lines) + "\n")
    (tmp_path / "tactile.jsonl").write_text("\n".join(tactile_lines) + "\n")
    (tmp_path / "joints.jsonl").write_text("\n".join(joint_lines) + "\n")


class TestPairAndPretrain:
    def test_pair_then_pretrain(self, tmp_path, capsys):
        write_stream_files(tmp_path)
        code = dispatch(["pair",
                         "--visual", str(tmp_path / "visual.jsonl"),
                         "--tactile", str(tmp_path / "tactile.jsonl"),
                         "--joints", str(tmp_path / "joints.jsonl"),
                         "--out", str(tmp_path / "episodes"),
                         "--episode-id", "e1", "--task", "lift"])
        assert code == 0
        assert "records=24" in capsys.readouterr().out
        episode = read_episode(tmp_path / "episodes" / "episode_e1")
        assert len(episode) == 24
        assert episode.meta.resolution == (64, 48)

        code = dispatch(["pretrain",
                         "--episode", str(tmp_path / "episodes" / "episode_e1"),
                         "--out", str(tmp_path / "head.json"),
                         "--metrics", str(tmp_path / "metrics.csv"),
                         "--batch-size", "8", "--epochs", "2", "--seed", "0"])
        assert code == 0
        head = json.loads((tmp_path / "head.json").read_text())
        assert head["d_in"] == 64 + 7
        lines = (tmp_path / "metrics.csv").read_text().strip().splitlines()
        assert len(lines) == 3

    def test_duplicate_episode_id_exit_2(self, tmp_path):
        write_stream_files(tmp_path)
        args = ["pair",
                "--visual", str(tmp_path / "visual.jsonl"),
                "--tactile", str(tmp_path / "tactile.jsonl"),
                "--joints", str(tmp_path / "joints.jsonl"),
                "--out", str(tmp_path / "episodes"), "--episode-id", "dup"]
        assert dispatch(args) == 0
        assert dispatch(args) == 2


class TestConfigDirEnv:
    def test_relative_config_resolves_against_env_dir(self, workdir, tmp_path,
                                                      monkeypatch):
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("VISUOTACT_CONFIG_DIR", str(workdir))
        code = dispatch(["undistort", "--intrinsics", "intr.json",
                         "--in", str(workdir / "raw_contact.png"),
                         "--out", str(tmp_path / "u.png")])
        assert code == 0
        assert (tmp_path / "u.png").exists()


class TestBenchCommand:
    def test_insufficient_frames_exit_2(self):
        assert dispatch(["bench", "--frames", "50"]) == 2

    def test_thread_scaling_non_decreasing_within_noise(self):
        from visuotact.bench import bench_pipeline
        single = bench_pipeline(frames=500, threads=1, warmup=30)
        double = bench_pipeline(frames=500, threads=2, warmup=30)
        assert double.fps >= single.fps * 0.9

    def test_short_run_report(self, capsys):
        assert dispatch(["bench", "--frames", "120", "--warmup", "10"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["frames"] == 120
        assert report["fps"] > 0
        assert set(report["stage_mean_us"]) == {"undistort", "rectify", "enhance"}
