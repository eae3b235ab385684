import json
import os
from pathlib import Path

import numpy as np
import pytest

import neo_fov as nf

SOURCE_DIR = Path(os.environ.get("NEO_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_extend_intrinsics_to_wide_fov():
    small = nf.CameraIntrinsics(256.0, 512, 512)
    large = nf.extend_intrinsics(small, 126.87, 126.87)
    assert large.focal_px == 256.0
    assert large.width % 2 == 0
    fx, fy = large.fov()
    assert abs(fx - 126.87) < 0.01
    assert abs(fy - 126.87) < 0.01
    assert nf.central_offset(small, large) == [(large.width - 512) // 2] * 2


def test_invalid_intrinsics_raise():
    with pytest.raises(nf.NeoError):
        nf.CameraIntrinsics(0.0, 32, 32)


def test_pose_round_trip():
    p = nf.pose_from_dofs(1.0, 2.0, 1.5, 30.0)
    d = nf.dofs_from_pose(p)
    assert d["x"] == pytest.approx(1.0)
    assert d["yaw_deg"] == pytest.approx(30.0)
    origin, direction = nf.ray_for_pixel(p, nf.CameraIntrinsics(16.0, 32, 32), 15.5, 15.5)
    np.testing.assert_allclose(origin, [1.0, 2.0, 1.5])
    np.testing.assert_allclose(direction / np.linalg.norm(direction),
                               [np.cos(np.radians(30)), np.sin(np.radians(30)), 0.0], atol=1e-12)


def test_metrics():
    rng = np.random.default_rng(0)
    a = rng.random((32, 32, 3), dtype=np.float32)
    assert nf.psnr(a, a) == 99.0
    assert nf.ssim(a, a) == pytest.approx(1.0)
    b = np.clip(a + 0.01, 0, 1)
    assert 30 < nf.psnr(a, b) < 60
    small = nf.CameraIntrinsics(16.0, 16, 16)
    large = nf.CameraIntrinsics(16.0, 32, 32)
    band = nf.band_mask(small, large)
    assert band.shape == (32, 32)
    assert band.sum() == 32 * 32 - 16 * 16
    c = a.copy()
    c[8:24, 8:24] = 0
    assert nf.psnr(a, c, band) == 99.0


def test_blur_score():
    assert nf.blur_score(np.full((16, 16, 3), 0.4, dtype=np.float32)) == 0.0
    img = np.zeros((16, 16, 3), dtype=np.float32)
    img[::2, ::2] = 1.0
    assert nf.blur_score(img) > 0


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    a = nf.quantize(rng.random((8, 12, 3), dtype=np.float32))
    nf.write_png(tmp_path / "a.png", a)
    np.testing.assert_array_equal(nf.read_png(tmp_path / "a.png"), a)


def test_lattice_counts():
    w = nf.WalkableArea.rectangle([0, 0], [1.8, 1.8], 0.05)
    assert nf.grid_positions(w, 0.1).shape == (361, 2)
    poses = nf.sample_poses(w, 0.1, 72)
    assert len(poses) == 361 * 72
    anchors = [nf.pose_from_dofs(0.0, 0.0, 1.5, 0.0)]
    near = nf.sample_poses(w, 0.1, 1, anchors=anchors, coverage_threshold=0.25)
    assert 0 < len(near) < 361


def test_constant_field_render():
    field = nf.VoxelRadianceField.constant([-1, -1, -1], [1, 1, 1], [4, 4, 4], 1e-9, 0.7)
    cfg = nf.RenderConfig()
    cfg.background = [0.2, 0.2, 0.2]
    img = field.render(nf.pose_from_dofs(0, 0, 0, 0), nf.CameraIntrinsics(8.0, 8, 8), cfg)
    assert img.shape == (8, 8, 3)
    np.testing.assert_allclose(img, 0.2, atol=1e-6)


def test_pipeline_scene_stage(tmp_path):
    cfg = nf.load_config(SOURCE_DIR / "configs" / "smoke.json")
    parsed = json.loads(cfg.to_json())
    assert parsed["seed"] == cfg.seed
    p = nf.Pipeline(cfg, tmp_path)
    p.scene_gen()
    assert (p.stage_dir("scene") / "provenance.json").exists()
    p.scene_gen()
    with pytest.raises(nf.NeoError, match="neo"):
        p.fit_field()
