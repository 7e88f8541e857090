import numpy as np
import pytest

from visuotact import (CameraIntrinsics, GelScene, Indenter, ScratchEvent,
                       WearModel, degrade, frames_equal, render_contact,
                       render_reference, undistort_image)
from visuotact.errors import DimensionError, GeometryError
from visuotact.synth import (distort_image_render, load_scene, load_wear_model,
                             render_checkerboard_frame, save_scene,
                             save_wear_model)

from conftest import edge_crossings, line_fit_rms


class TestGelScene:
    def test_clipping_scene_rejected(self):
        with pytest.raises(DimensionError):
            GelScene(32, 32, base_brightness=200, gradient_strength=0.5)

    def test_json_round_trip(self, tmp_path):
        scene = GelScene(100, 80, 140, 0.25, 1.5)
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        assert load_scene(path) == scene


class TestRenderReference:
    def test_flat_scene_constant(self):
        frame = render_reference(GelScene(16, 16, 120, 0.0, 0.0))
        assert np.all(frame.data == 120)

    def test_gradient_ratio(self):
        frame = render_reference(GelScene(32, 240, 120, 0.5, 0.0))
        top = frame.channel(0)[0].mean()
        bottom = frame.channel(0)[-1].mean()
        assert bottom / top == pytest.approx(1.5, abs=1 / 120)

    def test_row_means_strictly_increase(self):
        # per-row step chosen > 1 gray level so quantization cannot plateau
        frame = render_reference(GelScene(32, 60, 180, 0.4, 0.0))
        means = frame.channel(0).mean(axis=1)
        assert np.all(np.diff(means) > 0)

    def test_deterministic_per_seed(self):
        scene = GelScene(48, 48, 130, 0.2, 3.0)
        assert frames_equal(render_reference(scene, 7), render_reference(scene, 7))
        assert not frames_equal(render_reference(scene, 7), render_reference(scene, 8))


class TestRenderContact:
    SCENE = GelScene(64, 64, 160, 0.2, 0.0)

    def test_no_indenters_equals_reference(self):
        frame, mask = render_contact(self.SCENE, [], seed=3)
        assert frames_equal(frame, render_reference(self.SCENE, seed=3))
        assert not mask.values.any()

    def test_center_darkening_factor(self):
        indenter = Indenter((32.0, 32.0), 10.0, 0.3)
        frame, _ = render_contact(self.SCENE, [indenter], seed=0)
        reference = render_reference(self.SCENE, seed=0)
        expected = reference.channel(0)[32, 32] * 0.7
        assert abs(float(frame.channel(0)[32, 32]) - expected) <= 1.0

    def test_contact_never_brightens(self, rng):
        indenters = [Indenter((20.0, 30.0), 12.0, 0.5, "spherical_cap"),
                     Indenter((40.0, 28.0), 15.0, 0.8)]
        scene = GelScene(64, 64, 150, 0.25, 2.0)
        frame, _ = render_contact(scene, indenters, seed=5)
        reference = render_reference(scene, seed=5)
        assert np.all(frame.data.astype(int) <= reference.data.astype(int))

    def test_mask_within_dilated_footprints(self):
        indenters = [Indenter((20.0, 20.0), 8.0, 1.0), Indenter((45.0, 40.0), 10.0, 0.6)]
        _, mask = render_contact(self.SCENE, indenters, seed=0)
        ys, xs = np.nonzero(mask.values)
        for x, y in zip(xs, ys):
            inside = any(np.hypot(x - ind.center[0], y - ind.center[1])
                         <= ind.radius + 1.0 for ind in indenters)
            assert inside, (x, y)

    def test_center_outside_frame_rejected(self):
        with pytest.raises(GeometryError):
            render_contact(self.SCENE, [Indenter((100.0, 10.0), 5.0, 0.5)])


class TestDegrade:
    SCENE = GelScene(64, 64, 150, 0.2, 0.0)

    def test_cycle_zero_unchanged(self):
        worn = degrade(self.SCENE, WearModel.nominal(), 0)
        assert worn.scene == self.SCENE
        assert worn.contrast_scale == 1.0
        assert not worn.scratches

    def test_zero_rates_indestructible(self):
        wear = WearModel(0.0, 0.0, ())
        worn = degrade(self.SCENE, wear, 10_000)
        assert worn.scene == self.SCENE
        assert frames_equal(render_reference(worn, 1), render_reference(self.SCENE, 1))

    def test_scratches_appear_at_their_cycle(self):
        wear = WearModel(0.0, 0.0, (ScratchEvent(100, (10.0, 10.0), (50.0, 50.0), 0.5),))
        assert not degrade(self.SCENE, wear, 99).scratches
        assert len(degrade(self.SCENE, wear, 100).scratches) == 1
        clean = render_reference(degrade(self.SCENE, wear, 99), 2)
        scratched = render_reference(degrade(self.SCENE, wear, 100), 2)
        assert (clean.data.astype(int) - scratched.data.astype(int)).max() > 20

    def test_contrast_scale_shrinks_response(self):
        wear = WearModel(0.0, 5e-4, ())
        indenter = Indenter((32.0, 32.0), 10.0, 0.5)
        fresh, _ = render_contact(self.SCENE, [indenter], seed=0)
        worn, _ = render_contact(degrade(self.SCENE, wear, 3000), [indenter], seed=0)
        reference = render_reference(self.SCENE, seed=0)
        fresh_dip = reference.channel(0)[32, 32].astype(int) - fresh.channel(0)[32, 32]
        worn_dip = reference.channel(0)[32, 32].astype(int) - worn.channel(0)[32, 32]
        assert worn_dip < fresh_dip

    def test_wear_json_round_trip(self, tmp_path):
        wear = WearModel.nominal()
        path = tmp_path / "wear.json"
        save_wear_model(wear, path)
        assert load_wear_model(path) == wear


class TestFisheyeRender:
    def test_distort_then_undistort_restores_straight_edges(self):
        intr = CameraIntrinsics(320.0, 320.0, 320.0, 240.0, (0.05, 0, 0, 0), 640, 480)
        pattern = render_checkerboard_frame(intr, square_px=60)
        fisheye = distort_image_render(pattern, intr)
        restored = undistort_image(fisheye, intr, intr)
        xs, ys = edge_crossings(fisheye, 120, range(120, 520, 8), window=45)
        assert line_fit_rms(xs, ys) > 1.0          # fisheye bends the boundary
        xs, ys = edge_crossings(restored, 120, range(120, 520, 8), window=8)
        assert line_fit_rms(xs, ys) < 0.5          # undistortion straightens it
