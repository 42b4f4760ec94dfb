"""Unified occupancy-orientation voxel grid.

Stores, per voxel: an occupancy bit, a committed-strand counter (used by the
growing stage), and a mod-pi canonical unit direction. Construction fuses an
oriented point cloud; a deterministic interior fill stands in for learned
inner-field inference.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .geom import canonical_sign_3d, normalize, sign_aligned_mean
from .spatial import SpatialIndex

VOLUME_MAGIC = b"OOVL"


@dataclass
class OOVolume:
    origin: np.ndarray          # (3,) mm, min corner of voxel (0,0,0)
    voxel_size: float           # mm
    dims: tuple                 # (nx, ny, nz)
    occ: np.ndarray = field(repr=False)     # (nx, ny, nz) bool
    ori: np.ndarray = field(repr=False)     # (nx, ny, nz, 3) float32, zero where empty
    counts: np.ndarray = field(repr=False)  # (nx, ny, nz) uint16 committed strands

    @classmethod
    def empty(cls, origin, voxel_size, dims):
        nx, ny, nz = dims
        return cls(
            origin=np.asarray(origin, dtype=np.float64),
            voxel_size=float(voxel_size),
            dims=(nx, ny, nz),
            occ=np.zeros((nx, ny, nz), dtype=bool),
            ori=np.zeros((nx, ny, nz, 3), dtype=np.float32),
            counts=np.zeros((nx, ny, nz), dtype=np.uint16),
        )

    def voxel_of(self, pts):
        """Integer voxel indices of (N, 3) points (may be out of bounds)."""
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return np.floor((pts - self.origin) / self.voxel_size).astype(np.int64)

    def in_bounds(self, idx):
        idx = idx.reshape(-1, 3)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=1)

    def centers(self, idx):
        """World centers of (N, 3) voxel indices."""
        return self.origin + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size

    def occupied_indices(self):
        return np.argwhere(self.occ)


def voxel_mean_directions(points, dirs, origin, voxel_size, dims=None):
    """Sign-aligned per-voxel mean directions of an oriented point set.

    Members of a voxel are visited in lexicographic (x, y, z) position order
    so the running-mean alignment is independent of input ordering. Returns
    (voxel_idx (M, 3), mean_dirs (M, 3) unit).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((points - np.asarray(origin)) / voxel_size).astype(np.int64)
    if dims is not None:
        keep = np.all((idx >= 0) & (idx < np.array(dims)), axis=1)
        idx, points, dirs = idx[keep], points[keep], dirs[keep]
    if len(points) == 0:
        return np.empty((0, 3), np.int64), np.empty((0, 3))
    # spatial-hash order: voxel first, then position lexicographically
    order = np.lexsort(
        (points[:, 2], points[:, 1], points[:, 0], idx[:, 2], idx[:, 1], idx[:, 0])
    )
    idx, dirs = idx[order], dirs[order]
    key = idx.view([("x", np.int64), ("y", np.int64), ("z", np.int64)]).reshape(-1)
    uniq, starts = np.unique(key, return_index=True)
    starts = np.sort(starts)
    bounds = np.concatenate([starts, [len(idx)]])
    out_idx = idx[starts]
    out_dir = np.empty((len(starts), 3))
    for k in range(len(starts)):
        out_dir[k] = sign_aligned_mean(dirs[bounds[k] : bounds[k + 1]])
    return out_idx, canonical_sign_3d(out_dir)


def voxelize(points, dirs, voxel_size=2.0, pad_voxels=2):
    """Build an OOVolume from an oriented point cloud."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise DataError("voxelize: empty point cloud")
    lo = points.min(axis=0) - pad_voxels * voxel_size
    hi = points.max(axis=0) + pad_voxels * voxel_size
    dims = tuple(int(np.ceil((hi[k] - lo[k]) / voxel_size)) + 1 for k in range(3))
    vol = OOVolume.empty(lo, voxel_size, dims)
    vidx, vdir = voxel_mean_directions(points, dirs, vol.origin, voxel_size, dims)
    vol.occ[vidx[:, 0], vidx[:, 1], vidx[:, 2]] = True
    vol.ori[vidx[:, 0], vidx[:, 1], vidx[:, 2]] = vdir.astype(np.float32)
    return vol


_FILL_STEPS = (
    np.array([0, 0, -1]),
    np.array([0, 0, 1]),
    np.array([0, -1, 0]),
    np.array([0, 1, 0]),
    np.array([-1, 0, 0]),
    np.array([1, 0, 0]),
)


def fill_interior(vol, scalp, max_depth_mm=None):
    """Occupy the gap between the voxelized outer shell and the scalp surface.

    Wave-style breadth-first fill seeded at every occupied voxel, moving only
    to 6-neighbors that are strictly closer to the scalp surface and not
    inside it; orientation is copied from the voxel that reached it first
    (fixed axis priority breaks same-wave ties). `max_depth_mm` bounds how
    many waves may run, so a thin visible shell thickens into a plausible
    hair body instead of flooding everything down to the scalp; None leaves
    the fill unbounded.
    """
    verts = scalp.vertices
    lo_ok = np.all(verts.min(axis=0) >= vol.origin - vol.voxel_size)
    hi = vol.origin + np.array(vol.dims) * vol.voxel_size
    hi_ok = np.all(verts.max(axis=0) <= hi + vol.voxel_size)
    if not (lo_ok and hi_ok):
        raise ConfigError("scalp mesh extends outside the volume bounds")

    nx, ny, nz = vol.dims
    grid = np.stack(
        np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    centers = vol.centers(grid)
    index = SpatialIndex(verts)
    nid, dist = index.nearest_batch(centers)
    nrm = scalp.vertex_normals[nid]
    signed = np.einsum("ij,ij->i", centers - verts[nid], nrm)
    dist = dist.reshape(nx, ny, nz)
    signed = signed.reshape(nx, ny, nz)

    filled = vol.occ.copy()
    frontier = vol.occ.copy()
    eps = 1e-9
    inside_ok = signed >= -0.5 * vol.voxel_size
    max_waves = np.inf if max_depth_mm is None else int(max_depth_mm / vol.voxel_size)
    wave = 0
    while frontier.any() and wave < max_waves:
        wave += 1
        nxt = np.zeros_like(frontier)
        for step in _FILL_STEPS:
            src_lo = [max(0, -step[k]) for k in range(3)]
            src_hi = [vol.dims[k] - max(0, step[k]) for k in range(3)]
            src = (slice(src_lo[0], src_hi[0]), slice(src_lo[1], src_hi[1]), slice(src_lo[2], src_hi[2]))
            dst = (
                slice(src_lo[0] + step[0], src_hi[0] + step[0]),
                slice(src_lo[1] + step[1], src_hi[1] + step[1]),
                slice(src_lo[2] + step[2], src_hi[2] + step[2]),
            )
            cand = (
                frontier[src]
                & ~filled[dst]
                & ~nxt[dst]
                & inside_ok[dst]
                & (dist[dst] < dist[src] - eps)
            )
            if not cand.any():
                continue
            si, sj, sk = np.nonzero(cand)
            vol.ori[si + src_lo[0] + step[0], sj + src_lo[1] + step[1], sk + src_lo[2] + step[2]] = vol.ori[
                si + src_lo[0], sj + src_lo[1], sk + src_lo[2]
            ]
            nxt[dst] |= cand
        filled |= nxt
        frontier = nxt
    vol.occ = filled
    return vol


def sample_orientation_batch(vol, pts, prev_dirs):
    """Trilinear, sign-continuous orientation lookup for (N, 3) points.

    Returns (dirs (N, 3), has (N,) bool, support (N,)); `has` is False where
    no occupied voxel contributes (strand termination) and `support` is the
    total trilinear weight carried by occupied voxels (1 = fully interior).
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    prev_dirs = np.asarray(prev_dirs, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    g = (pts - vol.origin) / vol.voxel_size - 0.5
    base = np.floor(g).astype(np.int64)
    frac = g - base

    acc = np.zeros((n, 3))
    wsum = np.zeros(n)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                idx = base + np.array([dx, dy, dz])
                inb = vol.in_bounds(idx)
                ci = np.clip(idx, 0, np.array(vol.dims) - 1)
                occ = vol.occ[ci[:, 0], ci[:, 1], ci[:, 2]] & inb
                w = (
                    (frac[:, 0] if dx else 1 - frac[:, 0])
                    * (frac[:, 1] if dy else 1 - frac[:, 1])
                    * (frac[:, 2] if dz else 1 - frac[:, 2])
                )
                w = np.where(occ, w, 0.0)
                o = vol.ori[ci[:, 0], ci[:, 1], ci[:, 2]].astype(np.float64)
                sign = np.where(np.einsum("ij,ij->i", o, prev_dirs) < 0, -1.0, 1.0)
                acc += (w * sign)[:, None] * o
                wsum += w
    has = wsum > 0
    norms = np.linalg.norm(acc, axis=1)
    degen = has & (norms < 1e-9)
    if degen.any():
        # blended to zero: fall back to sign-corrected previous direction
        acc[degen] = prev_dirs[degen]
    dirs = normalize(acc)
    dirs[~has] = 0.0
    return dirs, has, wsum


def sample_orientation(vol, p, prev_dir):
    """Single-point orientation lookup; returns None outside occupied space."""
    d, has, _ = sample_orientation_batch(vol, np.reshape(p, (1, 3)), np.reshape(prev_dir, (1, 3)))
    return d[0] if has[0] else None


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------
def write_volume(path, vol):
    """Binary volume file: header, occupancy bitset, orientations of occupied voxels."""
    with open(path, "wb") as f:
        f.write(VOLUME_MAGIC)
        f.write(struct.pack("<IIIf", *vol.dims, vol.voxel_size))
        f.write(struct.pack("<fff", *vol.origin))
        f.write(np.packbits(vol.occ.reshape(-1)).tobytes())
        flat_occ = vol.occ.reshape(-1)
        ori = vol.ori.reshape(-1, 3)[flat_occ].astype("<f4")
        f.write(ori.tobytes())


def read_volume(path):
    with open(path, "rb") as f:
        if f.read(4) != VOLUME_MAGIC:
            raise DataError(f"{path}: not a volume file (bad magic)")
        nx, ny, nz, vs = struct.unpack("<IIIf", f.read(16))
        origin = np.array(struct.unpack("<fff", f.read(12)), dtype=np.float64)
        nvox = nx * ny * nz
        nbytes = (nvox + 7) // 8
        occ = np.unpackbits(np.frombuffer(f.read(nbytes), dtype=np.uint8))[:nvox].astype(bool)
        nocc = int(occ.sum())
        ori_flat = np.frombuffer(f.read(nocc * 12), dtype="<f4").reshape(nocc, 3)
        if ori_flat.shape[0] != nocc:
            raise DataError(f"{path}: truncated orientation payload")
    vol = OOVolume.empty(origin, vs, (nx, ny, nz))
    vol.occ = occ.reshape(nx, ny, nz)
    ori = np.zeros((nvox, 3), dtype=np.float32)
    ori[occ] = ori_flat
    vol.ori = ori.reshape(nx, ny, nz, 3)
    return vol
