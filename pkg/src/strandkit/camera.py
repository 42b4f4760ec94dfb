"""Pinhole camera model with per-view orientation / confidence / depth maps.

Conventions: world and camera coordinates are in millimetres; pixel
coordinates (u, v) are continuous with u along columns and v along rows,
(0, 0) at the center of the top-left pixel. Depth is camera-space z.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvalidDepthError, OutOfFrustumError
from .geom import normalize

DEPTH_SENTINEL = -1.0
MAP_MAGIC = b"PMAP"


@dataclass
class PixelSample:
    uv: np.ndarray  # (2,) pixel coordinates
    z: float        # camera-space depth, mm


@dataclass
class CameraView:
    """One calibrated view: intrinsics, world-to-camera rigid transform, maps.

    `orientation`, `confidence` and `depth` may be None for a bare camera
    (e.g. while rendering the maps in the first place).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    R: np.ndarray            # (3, 3) world-to-camera rotation
    t: np.ndarray            # (3,) world-to-camera translation, mm
    width: int
    height: int
    orientation: np.ndarray | None = None  # (H, W, 2) unit 2D vectors
    confidence: np.ndarray | None = None   # (H, W) in [0, 1]
    depth: np.ndarray | None = None        # (H, W) mm, DEPTH_SENTINEL for no hit
    name: str = field(default="")

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.R.T @ self.t

    # ------------------------------------------------------------------
    # projection
    # ------------------------------------------------------------------
    def project_many(self, pts):
        """Project (N, 3) world points. Returns uv (N, 2) and z (N).

        Does not raise for points behind the camera; callers mask on z > 0.
        """
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        pc = pts @ self.R.T + self.t
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    def back_project_many(self, uv, z):
        """Inverse projection of (N, 2) pixels and (N,) depths to world points."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        x = (uv[:, 0] - self.cx) * z / self.fx
        y = (uv[:, 1] - self.cy) * z / self.fy
        pc = np.stack([x, y, z], axis=1)
        return (pc - self.t) @ self.R

    def in_frame(self, uv):
        """Boolean mask of pixels within the image rectangle."""
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        return (
            (uv[:, 0] >= 0)
            & (uv[:, 0] <= self.width - 1)
            & (uv[:, 1] >= 0)
            & (uv[:, 1] <= self.height - 1)
        )


def project(camera, p):
    """Project a single world point; raises OutOfFrustumError behind the camera."""
    uv, z = camera.project_many(np.asarray(p, dtype=np.float64).reshape(1, 3))
    if z[0] <= 0:
        raise OutOfFrustumError(f"point {p} has non-positive camera depth {z[0]:.3f}")
    return PixelSample(uv=uv[0], z=float(z[0]))


def back_project(camera, uv, z):
    """Back-project a pixel + depth to a world point; z must be positive."""
    z = float(z)
    if z <= 0:
        raise InvalidDepthError(f"depth must be positive, got {z}")
    return camera.back_project_many(np.asarray(uv, dtype=np.float64).reshape(1, 2), [z])[0]


# ----------------------------------------------------------------------
# map sampling
# ----------------------------------------------------------------------
def sample_bilinear(grid, uv, oob_value=0.0):
    """Bilinear interpolation of an (H, W) or (H, W, C) grid at (N, 2) pixels.

    Out-of-bounds samples return `oob_value`.
    """
    grid = np.asarray(grid)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    h, w = grid.shape[:2]
    scalar = grid.ndim == 2
    g = grid[..., None] if scalar else grid
    c = g.shape[2]

    u, v = uv[:, 0], uv[:, 1]
    valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    u = np.clip(u, 0, w - 1)
    v = np.clip(v, 0, h - 1)
    u0 = np.clip(np.floor(u).astype(np.int64), 0, w - 2) if w > 1 else np.zeros(len(u), np.int64)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, h - 2) if h > 1 else np.zeros(len(v), np.int64)
    fu = (u - u0) if w > 1 else np.zeros_like(u)
    fv = (v - v0) if h > 1 else np.zeros_like(v)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)

    out = (
        g[v0, u0] * ((1 - fu) * (1 - fv))[:, None]
        + g[v0, u1] * (fu * (1 - fv))[:, None]
        + g[v1, u0] * ((1 - fu) * fv)[:, None]
        + g[v1, u1] * (fu * fv)[:, None]
    )
    out = out.astype(np.float64)
    out[~valid] = oob_value
    return out[:, 0] if scalar else out


def sample_nearest(grid, uv, oob_value=DEPTH_SENTINEL):
    """Nearest-neighbor sampling; used for depth maps (no cross-edge blending)."""
    grid = np.asarray(grid)
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    h, w = grid.shape[:2]
    u = np.rint(uv[:, 0]).astype(np.int64)
    v = np.rint(uv[:, 1]).astype(np.int64)
    valid = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    out = np.full(len(uv), oob_value, dtype=np.float64)
    out[valid] = grid[v[valid], u[valid]]
    return out


def sample_orientation_map(camera, uv):
    """Bilinear orientation lookup, re-normalized to unit length."""
    o = sample_bilinear(camera.orientation, uv, oob_value=0.0)
    return normalize(o)


def sample_map(grid, uv, kind="bilinear", oob_value=0.0):
    """Generic map lookup. `kind` is 'bilinear' or 'nearest'."""
    if kind == "nearest":
        return sample_nearest(grid, uv, oob_value=oob_value)
    return sample_bilinear(grid, uv, oob_value=oob_value)


# ----------------------------------------------------------------------
# visibility
# ----------------------------------------------------------------------
def visibility_many(camera, pts, eps_vis):
    """Visibility score in [0, 1] for (N, 3) world points.

    V = max(0, 1 - |z - D(u)| / eps_vis); 0 when the projection is out of
    frame, behind the camera, or on a sentinel depth pixel.
    """
    uv, z = camera.project_many(pts)
    score = np.zeros(len(uv))
    ok = (z > 0) & camera.in_frame(uv)
    if not np.any(ok):
        return score
    d = sample_nearest(camera.depth, uv[ok])
    hit = d > 0
    s = np.maximum(0.0, 1.0 - np.abs(z[ok][hit] - d[hit]) / eps_vis)
    tmp = np.zeros(ok.sum())
    tmp[hit] = s
    score[ok] = tmp
    return score


def visibility(camera, p, eps_vis):
    """Visibility score for a single world point."""
    return float(visibility_many(camera, np.asarray(p, dtype=np.float64).reshape(1, 3), eps_vis)[0])


# ----------------------------------------------------------------------
# file formats
# ----------------------------------------------------------------------
def write_map(path, grid):
    """Write an (H, W) or (H, W, C) float map as planar little-endian float32.

    Layout: 16-byte header (magic, width, height, channels) followed by the
    channel planes in row-major order.
    """
    grid = np.asarray(grid, dtype=np.float32)
    if grid.ndim == 2:
        grid = grid[..., None]
    h, w, c = grid.shape
    with open(path, "wb") as f:
        f.write(MAP_MAGIC + struct.pack("<III", w, h, c))
        for k in range(c):
            f.write(np.ascontiguousarray(grid[..., k]).tobytes())


def read_map(path):
    """Read a planar float32 map file; returns (H, W) or (H, W, C)."""
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) != 16 or head[:4] != MAP_MAGIC:
            raise DataError(f"{path}: not a map file (bad magic)")
        w, h, c = struct.unpack("<III", head[4:])
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != w * h * c:
        raise DataError(f"{path}: truncated map payload")
    grid = data.reshape(c, h, w).transpose(1, 2, 0).astype(np.float32)
    return grid[..., 0] if c == 1 else grid


def write_rig(path, cameras):
    """Write the camera rig as structured text (intrinsics + 3x4 extrinsics)."""
    lines = ["# strandkit camera rig v1", f"count {len(cameras)}"]
    for i, cam in enumerate(cameras):
        lines.append(f"camera {i}")
        lines.append(f"size {cam.width} {cam.height}")
        lines.append(f"intrinsics {cam.fx:.9g} {cam.fy:.9g} {cam.cx:.9g} {cam.cy:.9g}")
        P = np.concatenate([cam.R, cam.t[:, None]], axis=1)
        for r in range(3):
            lines.append("P " + " ".join(f"{x:.17g}" for x in P[r]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_rig(path):
    """Read a camera rig file; returns a list of bare CameraView (no maps)."""
    with open(path) as f:
        tokens = [ln.split() for ln in f if ln.strip() and not ln.startswith("#")]
    it = iter(tokens)
    try:
        head = next(it)
        if head[0] != "count":
            raise DataError(f"{path}: expected 'count' header")
        n = int(head[1])
        cams = []
        for _ in range(n):
            assert next(it)[0] == "camera"
            sz = next(it)
            w, h = int(sz[1]), int(sz[2])
            intr = next(it)
            fx, fy, cx, cy = (float(x) for x in intr[1:5])
            P = np.array([[float(x) for x in next(it)[1:5]] for _ in range(3)])
            cams.append(
                CameraView(fx=fx, fy=fy, cx=cx, cy=cy, R=P[:, :3], t=P[:, 3], width=w, height=h)
            )
        return cams
    except (StopIteration, AssertionError, ValueError, IndexError) as e:
        raise DataError(f"{path}: malformed rig file ({e})") from e
