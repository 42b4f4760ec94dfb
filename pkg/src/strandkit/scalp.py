"""Scalp mesh: spherical-cap triangulation, seed sampling, and text IO."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .geom import normalize


@dataclass
class ScalpMesh:
    vertices: np.ndarray        # (n, 3) mm
    faces: np.ndarray           # (m, 3) int
    vertex_normals: np.ndarray  # (n, 3) unit, outward
    seeds: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    seed_normals: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    radius: float = 0.0

    def area(self):
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum()


def generate_scalp(radius_mm, cap_fraction, center=(0.0, 0.0, 0.0), n_theta=64):
    """Triangulated upper spherical cap with outward normals.

    `cap_fraction` is the fraction of the full sphere area covered by the
    cap; 1 yields a closed sphere.
    """
    if not (0 < cap_fraction <= 1):
        raise ConfigError(f"cap_fraction must be in (0, 1], got {cap_fraction}")
    if radius_mm <= 0:
        raise ConfigError(f"radius must be positive, got {radius_mm}")
    center = np.asarray(center, dtype=np.float64)
    theta_max = np.arccos(np.clip(1 - 2 * cap_fraction, -1.0, 1.0))
    closed = cap_fraction >= 1.0 - 1e-12

    n_rings = max(2, int(np.ceil(n_theta * theta_max / np.pi)))
    thetas = np.linspace(0, theta_max, n_rings + 1)[1:]
    if closed:
        thetas = thetas[:-1]  # bottom pole handled separately
    n_phi = 2 * n_theta

    verts = [np.array([0.0, 0.0, radius_mm])]
    ring_start = []
    phis = np.arange(n_phi) * 2 * np.pi / n_phi
    for th in thetas:
        ring_start.append(len(verts))
        ring = np.stack(
            [
                radius_mm * np.sin(th) * np.cos(phis),
                radius_mm * np.sin(th) * np.sin(phis),
                np.full(n_phi, radius_mm * np.cos(th)),
            ],
            axis=1,
        )
        verts.extend(ring)
    if closed:
        bottom = len(verts)
        verts.append(np.array([0.0, 0.0, -radius_mm]))
    verts = np.asarray(verts)

    faces = []
    # top fan
    for j in range(n_phi):
        faces.append([0, ring_start[0] + j, ring_start[0] + (j + 1) % n_phi])
    # ring quads
    for r in range(len(ring_start) - 1):
        a0, b0 = ring_start[r], ring_start[r + 1]
        for j in range(n_phi):
            j1 = (j + 1) % n_phi
            faces.append([a0 + j, b0 + j, b0 + j1])
            faces.append([a0 + j, b0 + j1, a0 + j1])
    if closed:
        last = ring_start[-1]
        for j in range(n_phi):
            faces.append([last + j, bottom, last + (j + 1) % n_phi])
    faces = np.asarray(faces, dtype=np.int64)

    normals = normalize(verts)  # radial, sphere centered at origin
    return ScalpMesh(
        vertices=verts + center,
        faces=faces,
        vertex_normals=normals,
        center=center,
        radius=float(radius_mm),
    )


def sample_seeds(scalp, n, seed=0):
    """Uniform-area seed sampling on the scalp surface (deterministic per seed)."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    a = scalp.vertices[scalp.faces[:, 0]]
    b = scalp.vertices[scalp.faces[:, 1]]
    c = scalp.vertices[scalp.faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    probs = areas / areas.sum()
    tri = rng.choice(len(areas), size=n, p=probs)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    w0, w1, w2 = 1 - r1, r1 * (1 - r2), r1 * r2
    pts = w0[:, None] * a[tri] + w1[:, None] * b[tri] + w2[:, None] * c[tri]
    na = scalp.vertex_normals[scalp.faces[tri, 0]]
    nb = scalp.vertex_normals[scalp.faces[tri, 1]]
    nc = scalp.vertex_normals[scalp.faces[tri, 2]]
    nrm = normalize(w0[:, None] * na + w1[:, None] * nb + w2[:, None] * nc)
    scalp.seeds = pts
    scalp.seed_normals = nrm
    return scalp


def write_scalp(path, scalp):
    with open(path, "w") as f:
        f.write("# strandkit scalp v1\n")
        f.write(f"center {scalp.center[0]:.9g} {scalp.center[1]:.9g} {scalp.center[2]:.9g}\n")
        f.write(f"radius {scalp.radius:.9g}\n")
        f.write(f"vertices {len(scalp.vertices)}\n")
        for v, n in zip(scalp.vertices, scalp.vertex_normals):
            f.write(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {n[0]:.9f} {n[1]:.9f} {n[2]:.9f}\n")
        f.write(f"faces {len(scalp.faces)}\n")
        for t in scalp.faces:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")
        f.write(f"seeds {len(scalp.seeds)}\n")
        for p, n in zip(scalp.seeds, scalp.seed_normals):
            f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {n[0]:.9f} {n[1]:.9f} {n[2]:.9f}\n")


def read_scalp(path):
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip() and not ln.startswith("#")]
    try:
        i = 0
        center = np.array([float(x) for x in lines[i].split()[1:4]]); i += 1
        radius = float(lines[i].split()[1]); i += 1
        nv = int(lines[i].split()[1]); i += 1
        rows = np.array([[float(x) for x in lines[i + k].split()] for k in range(nv)])
        i += nv
        nf = int(lines[i].split()[1]); i += 1
        faces = np.array([[int(x) for x in lines[i + k].split()] for k in range(nf)], dtype=np.int64)
        i += nf
        ns = int(lines[i].split()[1]); i += 1
        srows = np.array([[float(x) for x in lines[i + k].split()] for k in range(ns)])
        srows = srows.reshape(ns, 6) if ns else np.empty((0, 6))
    except (IndexError, ValueError) as e:
        raise DataError(f"{path}: malformed scalp file ({e})") from e
    return ScalpMesh(
        vertices=rows[:, :3],
        faces=faces,
        vertex_normals=rows[:, 3:],
        seeds=srows[:, :3],
        seed_normals=srows[:, 3:],
        center=center,
        radius=radius,
    )
