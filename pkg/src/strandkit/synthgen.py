"""Synthetic scene generator: parametric ground-truth wigs, orbit camera
rigs, and rendered orientation / confidence / depth maps with controllable
degradation. Stands in for real capture plus neural preprocessing.

All randomness flows through integer-seeded Philox generators; identical
seeds reproduce scenes bit for bit.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import camera as cam_mod
from .camera import CameraView, DEPTH_SENTINEL
from .errors import ConfigError, DataError
from .geom import canonical_half_space_2d, normalize, rotate_toward
from .scalp import generate_scalp, read_scalp, sample_seeds, write_scalp
from .strands import Strand, StrandSet, read_strands, write_strands

STYLES = ("straight", "wavy", "curly")


@dataclass
class StyleParams:
    style: str = "straight"
    strand_count: int = 5000
    length_min: float = 80.0       # mm
    length_max: float = 150.0      # mm
    gravity_rate: float = 0.02     # rad of droop per mm of arc length
    wave_amplitude: float = 6.0    # mm (wavy)
    wave_length: float = 30.0      # mm (wavy)
    helix_radius: float = 8.0      # mm (curly)
    helix_pitch: float = 15.0      # mm guide advance per turn (curly)
    vertex_step: float = 1.0       # mm spacing of emitted vertices
    seed: int = 0

    def validate(self):
        if self.style not in STYLES:
            raise ConfigError(f"unknown style {self.style!r}; expected one of {STYLES}")
        if self.strand_count <= 0:
            raise ConfigError("strand_count must be positive")
        if self.style == "curly" and self.helix_radius <= 0:
            raise ConfigError("helix_radius must be positive for curly style")
        if not (0 < self.length_min <= self.length_max):
            raise ConfigError("invalid length range")


def _strand_frame(n):
    """Constant orthonormal frame perpendicular to unit vector n."""
    up = np.array([0.0, 0.0, 1.0])
    e1 = np.cross(n, up)
    if np.linalg.norm(e1) < 1e-6:
        e1 = np.cross(n, np.array([1.0, 0.0, 0.0]))
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def _gen_one_strand(root, n, length, style, rng):
    """One strand as uniformly spaced vertices plus analytic unit tangents."""
    down = np.array([0.0, 0.0, -1.0])
    dt = style.vertex_step / 8.0
    t = np.arange(0.0, length + dt, dt)

    # gravity-bent guide: direction rotates from the scalp normal toward -z
    gd = np.stack([rotate_toward(n, down, style.gravity_rate * ti) for ti in t])
    guide = np.vstack([np.zeros(3), np.cumsum(0.5 * (gd[1:] + gd[:-1]) * dt, axis=0)])
    guide += root

    e1, e2 = _strand_frame(n)
    if style.style == "straight":
        c = guide
        cd = gd
    elif style.style == "wavy":
        w = 2 * np.pi / style.wave_length
        phase = rng.random() * 2 * np.pi
        amp_dir = np.cos(phase) * e1 + np.sin(phase) * e2
        c = guide + style.wave_amplitude * np.sin(w * t)[:, None] * amp_dir
        cd = gd + style.wave_amplitude * w * np.cos(w * t)[:, None] * amp_dir
    else:  # curly
        w = 2 * np.pi / style.helix_pitch
        phase = rng.random() * 2 * np.pi
        r = style.helix_radius
        cosw = np.cos(w * t + phase)
        sinw = np.sin(w * t + phase)
        off0 = r * (np.cos(phase) * e1 + np.sin(phase) * e2)
        c = guide + r * (cosw[:, None] * e1 + sinw[:, None] * e2) - off0
        cd = gd + r * w * (-sinw[:, None] * e1 + cosw[:, None] * e2)

    # arc-length resampling at the vertex step
    seg = np.linalg.norm(np.diff(c, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n_out = max(2, int(np.floor(s[-1] / style.vertex_step)) + 1)
    grid = np.arange(n_out) * style.vertex_step
    verts = np.stack([np.interp(grid, s, c[:, k]) for k in range(3)], axis=1)
    tans = np.stack([np.interp(grid, s, cd[:, k]) for k in range(3)], axis=1)
    return verts, normalize(tans)


def generate_strands(scalp, style):
    """Ground-truth wig: strands rooted on scalp seeds with analytic tangents."""
    style.validate()
    rng = np.random.Generator(np.random.Philox(key=style.seed))
    scalp = sample_seeds(scalp, style.strand_count, seed=style.seed)
    lengths = rng.uniform(style.length_min, style.length_max, size=style.strand_count)
    strands = []
    for root, n, length in zip(scalp.seeds, scalp.seed_normals, lengths):
        v, tg = _gen_one_strand(root, n, length, style, rng)
        strands.append(Strand(vertices=v, rooted=True, source="gt", tangents=tg))
    return StrandSet(strands)


# ----------------------------------------------------------------------
# camera rig
# ----------------------------------------------------------------------
def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World-to-camera rotation/translation for a camera at `eye` facing `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = normalize(np.asarray(target, dtype=np.float64) - eye)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-6:
        right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    right = normalize(right)
    dwn = np.cross(fwd, right)  # camera y points down in image space
    R = np.stack([right, dwn, fwd])
    t = -R @ eye
    return R, t


def make_orbit_rig(n_views=16, image_size=400, target=(0.0, 0.0, 0.0),
                   orbit_radius=400.0, focal_px=None, top_view=True):
    """Cameras on a horizontal orbit around `target`, plus one top view."""
    target = np.asarray(target, dtype=np.float64)
    if focal_px is None:
        focal_px = 1.1 * image_size
    cams = []
    for i in range(n_views):
        a = 2 * np.pi * i / n_views
        eye = target + orbit_radius * np.array([np.cos(a), np.sin(a), 0.0])
        R, t = look_at(eye, target)
        cams.append(CameraView(
            fx=focal_px, fy=focal_px, cx=(image_size - 1) / 2, cy=(image_size - 1) / 2,
            R=R, t=t, width=image_size, height=image_size, name=f"orbit_{i:02d}",
        ))
    if top_view:
        eye = target + np.array([0.0, 1e-3, orbit_radius])
        R, t = look_at(eye, target)
        cams.append(CameraView(
            fx=focal_px, fy=focal_px, cx=(image_size - 1) / 2, cy=(image_size - 1) / 2,
            R=R, t=t, width=image_size, height=image_size, name="top",
        ))
    return cams


# ----------------------------------------------------------------------
# rendering
# ----------------------------------------------------------------------
def render_maps(sset, cam, line_width_px=2.0, sample_spacing_px=0.5):
    """Z-buffered segment rasterization of a strand set into one view.

    Returns (O, C, D, gray): orientation = projected unit tangent of the
    front-most segment (canonical half-space), confidence = 1 on covered
    pixels, depth = nearest camera-space z, and an anti-aliased grayscale
    raster of the strands.
    """
    h, w = cam.height, cam.width
    O = np.zeros((h, w, 2), dtype=np.float32)
    C = np.zeros((h, w), dtype=np.float32)
    D = np.full((h, w), DEPTH_SENTINEL, dtype=np.float32)
    gray = np.zeros((h, w), dtype=np.float64)

    verts, _ = sset.all_vertices_tangents()
    if len(verts) == 0:
        return O, C, D, gray.astype(np.float32)

    # flatten all segments
    p0_list, p1_list = [], []
    for s in sset:
        v = s.vertices
        if len(v) < 2:
            continue
        p0_list.append(v[:-1])
        p1_list.append(v[1:])
    p0 = np.concatenate(p0_list)
    p1 = np.concatenate(p1_list)

    uv0, z0 = cam.project_many(p0)
    uv1, z1 = cam.project_many(p1)
    ok = (z0 > 0) & (z1 > 0)
    margin = line_width_px + 1
    ok &= (
        (np.maximum(uv0[:, 0], uv1[:, 0]) >= -margin)
        & (np.minimum(uv0[:, 0], uv1[:, 0]) <= w - 1 + margin)
        & (np.maximum(uv0[:, 1], uv1[:, 1]) >= -margin)
        & (np.minimum(uv0[:, 1], uv1[:, 1]) <= h - 1 + margin)
    )
    uv0, uv1, z0, z1 = uv0[ok], uv1[ok], z0[ok], z1[ok]
    if len(uv0) == 0:
        return O, C, D, gray.astype(np.float32)

    tan2d = canonical_half_space_2d(normalize(uv1 - uv0))
    px_len = np.linalg.norm(uv1 - uv0, axis=1)
    ns = np.maximum(2, np.ceil(px_len / sample_spacing_px).astype(np.int64) + 1)

    # ragged linspace over all segments
    total = int(ns.sum())
    seg_id = np.repeat(np.arange(len(ns)), ns)
    offs = np.arange(total) - np.repeat(np.cumsum(ns) - ns, ns)
    frac = offs / (ns[seg_id] - 1)
    suv = uv0[seg_id] + frac[:, None] * (uv1 - uv0)[seg_id]
    sz = z0[seg_id] + frac * (z1 - z0)[seg_id]

    # grayscale: bilinear coverage splat (before thickening)
    iu = np.floor(suv[:, 0]).astype(np.int64)
    iv = np.floor(suv[:, 1]).astype(np.int64)
    fu = suv[:, 0] - iu
    fv = suv[:, 1] - iv
    cover = 0.5 * sample_spacing_px  # approximate coverage per sample
    for du, dv, wgt in (
        (0, 0, (1 - fu) * (1 - fv)),
        (1, 0, fu * (1 - fv)),
        (0, 1, (1 - fu) * fv),
        (1, 1, fu * fv),
    ):
        uu, vv = iu + du, iv + dv
        m = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        np.add.at(gray, (vv[m], uu[m]), cover * wgt[m])
    gray = np.clip(gray, 0.0, 1.0)

    # thicken: splat a disk of integer offsets around each sample
    rad = max(0.5, line_width_px / 2.0)
    ir = int(np.floor(rad))
    disk = [(du, dv) for du in range(-ir, ir + 1) for dv in range(-ir, ir + 1)
            if du * du + dv * dv <= rad * rad]
    pu = np.rint(suv[:, 0]).astype(np.int64)
    pv = np.rint(suv[:, 1]).astype(np.int64)
    all_lin, all_z, all_sid = [], [], []
    for du, dv in disk:
        uu, vv = pu + du, pv + dv
        m = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        all_lin.append(vv[m] * w + uu[m])
        all_z.append(sz[m])
        all_sid.append(seg_id[m])
    lin = np.concatenate(all_lin)
    zz = np.concatenate(all_z)
    sid = np.concatenate(all_sid)

    # z-buffer: keep the nearest sample per pixel (stable for exact ties)
    order = np.lexsort((sid, zz, lin))
    lin, zz, sid = lin[order], zz[order], sid[order]
    first = np.concatenate([[True], lin[1:] != lin[:-1]])
    lin, zz, sid = lin[first], zz[first], sid[first]

    D.reshape(-1)[lin] = zz
    C.reshape(-1)[lin] = 1.0
    O.reshape(-1, 2)[lin] = tan2d[sid]
    return O, C, D, gray.astype(np.float32)


def degrade(O, C, D, angle_noise_deg=0.0, confidence_dropout=0.0,
            depth_noise_mm=0.0, seed=0):
    """Controlled map degradation; deterministic per seed, zero noise is a no-op."""
    if min(angle_noise_deg, confidence_dropout, depth_noise_mm) < 0:
        raise ConfigError("noise parameters must be non-negative")
    O = np.array(O, copy=True)
    C = np.array(C, copy=True)
    D = np.array(D, copy=True)
    rng = np.random.Generator(np.random.Philox(key=seed))
    h, w = C.shape
    if angle_noise_deg > 0:
        ang = rng.normal(0.0, np.deg2rad(angle_noise_deg), size=(h, w))
        ca, sa = np.cos(ang), np.sin(ang)
        ox, oy = O[..., 0].copy(), O[..., 1].copy()
        O[..., 0] = ca * ox - sa * oy
        O[..., 1] = sa * ox + ca * oy
        O = canonical_half_space_2d(O).astype(np.float32)
    if confidence_dropout > 0:
        drop = rng.random((h, w)) < confidence_dropout
        C[drop] = 0.0
    if depth_noise_mm > 0:
        noise = rng.normal(0.0, depth_noise_mm, size=(h, w))
        valid = D > 0
        D[valid] = np.maximum(1e-3, D[valid] + noise[valid])
    return O, C, D


# ----------------------------------------------------------------------
# scene bundles
# ----------------------------------------------------------------------
def write_bundle(path, cameras, gt, scalp, manifest):
    os.makedirs(path, exist_ok=True)
    os.makedirs(os.path.join(path, "views"), exist_ok=True)
    cam_mod.write_rig(os.path.join(path, "cameras.txt"), cameras)
    write_strands(os.path.join(path, "gt_strands.bin"), gt)
    tset = StrandSet([Strand(vertices=s.tangents) for s in gt])
    write_strands(os.path.join(path, "gt_tangents.bin"), tset)
    write_scalp(os.path.join(path, "scalp.txt"), scalp)
    for i, cam in enumerate(cameras):
        base = os.path.join(path, "views", f"view_{i:03d}")
        cam_mod.write_map(base + "_orient.map", cam.orientation)
        cam_mod.write_map(base + "_conf.map", cam.confidence)
        cam_mod.write_map(base + "_depth.map", cam.depth)
        if getattr(cam, "image", None) is not None:
            cam_mod.write_map(base + "_image.map", cam.image)
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def read_bundle(path):
    """Load a scene bundle; returns (cameras, gt StrandSet, scalp, manifest)."""
    rig = os.path.join(path, "cameras.txt")
    if not os.path.isfile(rig):
        raise DataError(f"{path}: not a scene bundle (missing cameras.txt)")
    cameras = cam_mod.read_rig(rig)
    for i, cam in enumerate(cameras):
        base = os.path.join(path, "views", f"view_{i:03d}")
        cam.orientation = cam_mod.read_map(base + "_orient.map")
        cam.confidence = cam_mod.read_map(base + "_conf.map")
        cam.depth = cam_mod.read_map(base + "_depth.map")
        img = base + "_image.map"
        cam.image = cam_mod.read_map(img) if os.path.isfile(img) else None
    gt = read_strands(os.path.join(path, "gt_strands.bin"))
    tset = read_strands(os.path.join(path, "gt_tangents.bin"))
    for s, t in zip(gt, tset):
        s.tangents = t.vertices
        s.rooted = True
        s.source = "gt"
    scalp_mesh = read_scalp(os.path.join(path, "scalp.txt"))
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    return cameras, gt, scalp_mesh, manifest
