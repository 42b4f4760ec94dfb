"""Strand containers and file formats.

A strand is an ordered 3D polyline (mm). The binary format is little-endian:
u32 magic, u32 strand count, then per strand a u32 vertex count followed by
float32 x, y, z triplets.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geom import polyline_tangents, resample_polyline

STRAND_MAGIC = 0x444E5453  # "STND"


@dataclass
class Strand:
    vertices: np.ndarray              # (n, 3) mm
    rooted: bool = False
    source: str = "traced"            # traced | linked | attached | gt
    tangents: np.ndarray | None = field(default=None, repr=False)  # (n, 3) unit

    def __len__(self):
        return len(self.vertices)


@dataclass
class StrandSet:
    strands: list

    def __len__(self):
        return len(self.strands)

    def __iter__(self):
        return iter(self.strands)

    def total_vertices(self):
        return sum(len(s) for s in self.strands)

    def resampled(self, step):
        """Uniform arc-length resampling of every strand; tangents recomputed."""
        out = []
        for s in self.strands:
            v = resample_polyline(s.vertices, step)
            out.append(Strand(vertices=v, rooted=s.rooted, source=s.source,
                              tangents=polyline_tangents(v)))
        return StrandSet(out)

    def all_vertices_tangents(self):
        """Concatenate vertices and unit tangents of all strands."""
        verts, tans = [], []
        for s in self.strands:
            verts.append(s.vertices)
            tans.append(s.tangents if s.tangents is not None else polyline_tangents(s.vertices))
        if not verts:
            return np.empty((0, 3)), np.empty((0, 3))
        return np.concatenate(verts), np.concatenate(tans)


def write_strands(path, sset):
    with open(path, "wb") as f:
        f.write(struct.pack("<II", STRAND_MAGIC, len(sset)))
        for s in sset:
            v = np.asarray(s.vertices, dtype="<f4").reshape(-1, 3)
            f.write(struct.pack("<I", len(v)))
            f.write(v.tobytes())


def read_strands(path):
    with open(path, "rb") as f:
        head = f.read(8)
        if len(head) != 8:
            raise DataError(f"{path}: truncated strand file")
        magic, count = struct.unpack("<II", head)
        if magic != STRAND_MAGIC:
            raise DataError(f"{path}: not a strand file (bad magic)")
        strands = []
        for _ in range(count):
            (n,) = struct.unpack("<I", f.read(4))
            raw = f.read(12 * n)
            if len(raw) != 12 * n:
                raise DataError(f"{path}: truncated strand payload")
            v = np.frombuffer(raw, dtype="<f4").reshape(n, 3).astype(np.float64)
            strands.append(Strand(vertices=v))
    return StrandSet(strands)


def write_strands_text(path, sset):
    """Debug exporter: one strand per block, blank-line separated."""
    with open(path, "w") as f:
        f.write(f"# strands {len(sset)}\n")
        for s in sset:
            for v in s.vertices:
                f.write(f"{v[0]:.4f} {v[1]:.4f} {v[2]:.4f}\n")
            f.write("\n")


def write_cloud_text(path, points, dirs=None):
    """Point cloud as `x y z` lines, or `x y z dx dy dz` when oriented."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    with open(path, "w") as f:
        if dirs is None:
            for p in points:
                f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}\n")
        else:
            dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
            for p, d in zip(points, dirs):
                f.write(
                    f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} "
                    f"{d[0]:.9f} {d[1]:.9f} {d[2]:.9f}\n"
                )


def read_cloud_text(path):
    """Read a cloud file; returns (points, dirs-or-None)."""
    rows = []
    with open(path) as f:
        for ln in f:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            rows.append([float(x) for x in ln.split()])
    if not rows:
        raise DataError(f"{path}: empty point cloud")
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[1] == 3:
        return arr, None
    if arr.shape[1] == 6:
        return arr[:, :3], arr[:, 3:]
    raise DataError(f"{path}: expected 3 or 6 columns, got {arr.shape[1]}")
