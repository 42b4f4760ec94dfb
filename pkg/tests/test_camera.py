import numpy as np
import pytest

from strandkit import camera as cam_mod
from strandkit.camera import (
    CameraView,
    DEPTH_SENTINEL,
    back_project,
    project,
    read_map,
    read_rig,
    sample_bilinear,
    sample_nearest,
    visibility,
    write_map,
    write_rig,
)
from strandkit.errors import DataError, InvalidDepthError, OutOfFrustumError

rng = np.random.Generator(np.random.Philox(key=21))


def random_camera():
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return CameraView(
        fx=rng.uniform(200, 600), fy=rng.uniform(200, 600),
        cx=rng.uniform(90, 110), cy=rng.uniform(90, 110),
        R=q, t=rng.normal(scale=50, size=3), width=200, height=200,
    )


def test_projection_matches_matrix_oracle():
    for _ in range(20):
        cam = random_camera()
        K = np.array([[cam.fx, 0, cam.cx], [0, cam.fy, cam.cy], [0, 0, 1.0]])
        P = K @ np.concatenate([cam.R, cam.t[:, None]], axis=1)
        pts = rng.normal(scale=100, size=(50, 3))
        uv, z = cam.project_many(pts)
        ph = np.concatenate([pts, np.ones((50, 1))], axis=1)
        proj = ph @ P.T
        front = proj[:, 2] > 0
        assert np.allclose(z[front], proj[front, 2])
        assert np.allclose(uv[front], proj[front, :2] / proj[front, 2:3], atol=1e-9)


def test_project_back_project_roundtrip():
    worst = 0.0
    for _ in range(20):
        cam = random_camera()
        pts = rng.normal(scale=100, size=(200, 3))
        uv, z = cam.project_many(pts)
        front = z > 0
        back = cam.back_project_many(uv[front], z[front])
        worst = max(worst, np.abs(back - pts[front]).max())
    assert worst < 1e-6


def test_project_raises_behind_camera():
    cam = random_camera()
    behind = cam.center - 10.0 * cam.R[2]  # along -optical axis
    with pytest.raises(OutOfFrustumError):
        project(cam, behind)


def test_back_project_rejects_nonpositive_depth():
    cam = random_camera()
    with pytest.raises(InvalidDepthError):
        back_project(cam, (10.0, 10.0), 0.0)
    with pytest.raises(InvalidDepthError):
        back_project(cam, (10.0, 10.0), -3.0)


def test_sample_bilinear_linear_ramp_exact():
    h, w = 16, 24
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    grid = 2.0 * xx + 3.0 * yy + 1.0
    uv = np.stack([rng.uniform(0, w - 1, 100), rng.uniform(0, h - 1, 100)], axis=1)
    got = sample_bilinear(grid, uv)
    assert np.allclose(got, 2.0 * uv[:, 0] + 3.0 * uv[:, 1] + 1.0)


def test_sample_bilinear_out_of_bounds_value():
    grid = np.ones((8, 8))
    got = sample_bilinear(grid, [[-1.0, 2.0], [3.0, 9.0]], oob_value=-5.0)
    assert np.allclose(got, [-5.0, -5.0])


def test_sample_nearest_rounds_and_sentinel():
    grid = np.arange(12.0).reshape(3, 4)
    got = sample_nearest(grid, [[1.4, 0.6], [3.6, 0.0]])
    assert got[0] == grid[1, 1]
    assert got[1] == DEPTH_SENTINEL


def test_visibility_on_and_off_surface():
    cam = random_camera()
    p = cam.center + 300.0 * cam.R[2]
    uv, z = cam.project_many(p[None])
    assert cam.in_frame(uv)[0]
    depth = np.full((cam.height, cam.width), DEPTH_SENTINEL, dtype=np.float32)
    u, v = int(round(uv[0, 0])), int(round(uv[0, 1]))
    depth[v, u] = z[0]
    cam.depth = depth
    assert visibility(cam, p, eps_vis=5.0) == pytest.approx(1.0, abs=1e-6)
    assert visibility(cam, p + 10.0 * cam.R[2], eps_vis=5.0) == 0.0


def test_map_io_roundtrip(tmp_path):
    for shape in [(7, 9), (5, 6, 2)]:
        grid = rng.normal(size=shape).astype(np.float32)
        p = tmp_path / "m.map"
        write_map(p, grid)
        back = read_map(p)
        assert back.shape == grid.shape
        assert np.array_equal(back, grid)


def test_map_io_bad_magic(tmp_path):
    p = tmp_path / "bad.map"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(DataError):
        read_map(p)


def test_rig_io_roundtrip(tmp_path):
    cams = [random_camera() for _ in range(3)]
    p = tmp_path / "rig.txt"
    write_rig(p, cams)
    back = read_rig(p)
    assert len(back) == 3
    for a, b in zip(cams, back):
        assert np.allclose(a.R, b.R, atol=1e-12)
        assert np.allclose(a.t, b.t, atol=1e-12)
        assert (a.fx, a.fy, a.width, a.height) == pytest.approx((b.fx, b.fy, b.width, b.height))


def test_rig_io_malformed(tmp_path):
    p = tmp_path / "rig.txt"
    p.write_text("count 2\ncamera 0\nsize 10 10\n")
    with pytest.raises(DataError):
        read_rig(p)
