"""Small geometric helpers shared by several modules."""

import numpy as np


def normalize(v, axis=-1, eps=1e-12):
    """Normalize vectors along `axis`, clipping tiny norms to avoid NaN."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.maximum(n, eps)


def canonical_half_space_2d(vecs):
    """Map 2D vectors to the y >= 0 half-space (ties: x >= 0), mod-pi convention."""
    v = np.array(vecs, dtype=np.float64, copy=True)
    flip = (v[..., 1] < 0) | ((v[..., 1] == 0) & (v[..., 0] < 0))
    v[flip] *= -1.0
    return v


def canonical_sign_3d(vecs):
    """Canonical sign for mod-pi 3D directions: z > 0, ties broken on y then x."""
    v = np.array(vecs, dtype=np.float64, copy=True)
    flip = (
        (v[..., 2] < 0)
        | ((v[..., 2] == 0) & (v[..., 1] < 0))
        | ((v[..., 2] == 0) & (v[..., 1] == 0) & (v[..., 0] < 0))
    )
    v[flip] *= -1.0
    return v


def sign_aligned_mean(dirs, eps=1e-6):
    """Mean of mod-pi directions: each member is flipped toward the running mean.

    `dirs` is (n, 3) in a fixed order (callers sort members deterministically).
    Returns a unit vector; degenerate accumulations fall back to the first member.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    acc = dirs[0].copy()
    for d in dirs[1:]:
        if np.dot(d, acc) < 0:
            acc += -d
        else:
            acc += d
    n = np.linalg.norm(acc)
    if n < eps:
        first = dirs[0]
        return first / max(np.linalg.norm(first), 1e-12)
    return acc / n


def polyline_lengths(verts):
    """Cumulative arc length of a polyline, starting at 0."""
    seg = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(verts, step):
    """Resample a polyline to uniform arc-length spacing `step`.

    Keeps both endpoints; a polyline shorter than `step` collapses to its
    two endpoints.
    """
    verts = np.asarray(verts, dtype=np.float64)
    if len(verts) < 2:
        return verts.copy()
    s = polyline_lengths(verts)
    total = s[-1]
    if total <= step:
        return np.stack([verts[0], verts[-1]])
    n = int(np.floor(total / step))
    grid = np.arange(n + 1) * step
    if total - grid[-1] > 1e-9:
        grid = np.concatenate([grid, [total]])
    out = np.empty((len(grid), 3))
    for k in range(3):
        out[:, k] = np.interp(grid, s, verts[:, k])
    return out


def resample_polyline_uniform(verts, step):
    """Resample so every segment has the same length, as close to `step` as
    the total arc length allows (segment count rounded to nearest)."""
    verts = np.asarray(verts, dtype=np.float64)
    if len(verts) < 2:
        return verts.copy()
    s = polyline_lengths(verts)
    total = s[-1]
    n = max(1, int(round(total / step)))
    grid = np.linspace(0.0, total, n + 1)
    out = np.empty((len(grid), 3))
    for k in range(3):
        out[:, k] = np.interp(grid, s, verts[:, k])
    return out


def polyline_tangents(verts):
    """Unit forward-difference tangents; the last vertex repeats the previous one."""
    verts = np.asarray(verts, dtype=np.float64)
    d = np.diff(verts, axis=0)
    d = normalize(d)
    return np.concatenate([d, d[-1:]], axis=0)


def rotate_toward(v, target, angle):
    """Rotate unit vector `v` toward unit `target` by `angle` radians (capped)."""
    v = np.asarray(v, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    c = np.clip(np.dot(v, target), -1.0, 1.0)
    full = np.arccos(c)
    if full < 1e-9:
        return v.copy()
    a = min(angle, full)
    # orthonormal component of target w.r.t. v
    w = target - c * v
    w /= np.linalg.norm(w)
    return np.cos(a) * v + np.sin(a) * w
