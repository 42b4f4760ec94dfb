"""Fused multi-view direction optimization for the outer hair shell.

Turns a raw outer point cloud plus per-view orientation / confidence /
depth maps into an oriented point cloud. Three stages per point: candidate
direction sampling in the top-K most reliable views, medoid fusion per
depth layer, and patch-based consistency refinement across those views.

All heavy paths are vectorized over batches of points; batches are
processed in a fixed order so results are identical for any worker count.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .camera import sample_bilinear, sample_nearest
from .errors import ConfigError, PipelineError
from .geom import normalize

_DEGEN_PX = 1e-6  # reprojected offset below this is unusable


@dataclass
class FpmvoParams:
    lambda_px: float = 5.0      # pixel offset magnitude along the 2D orientation
    delta_mm: float = 5.0       # depth half-range (2*delta = sampled span)
    depth_samples: int = 11     # S, odd so the rendered depth itself is sampled
    top_k: int = 5              # K views per point
    patch_size: int = 5         # P, odd patch edge for consistency refinement
    eps_vis_mm: float = 5.0     # visibility tolerance
    batch_points: int = 8192

    def __post_init__(self):
        if self.depth_samples < 3 or self.depth_samples % 2 == 0:
            raise ConfigError(f"depth_samples must be odd and >= 3, got {self.depth_samples}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.patch_size < 1 or self.patch_size % 2 == 0:
            raise ConfigError(f"patch_size must be odd, got {self.patch_size}")

    @property
    def deltas(self):
        """Deterministic uniform depth-offset grid including 0."""
        return np.linspace(-self.delta_mm, self.delta_mm, self.depth_samples)


@dataclass
class CandidateSet:
    """Per-point candidate directions from the top-K views."""
    view_idx: np.ndarray   # (K,) int, -1 where unused
    weights: np.ndarray    # (K,)
    valid: np.ndarray      # (K,) bool
    dirs: np.ndarray       # (K, S, 3) unit
    points: np.ndarray     # (K, S, 3) offset points, mm
    uv: np.ndarray         # (K, 2) projection of the query point per view


@dataclass
class FusedCandidates:
    dirs: np.ndarray       # (S, 3) medoid direction per depth layer
    points: np.ndarray     # (S, 3) offset point of the winning view
    sigma: np.ndarray      # (S,) consistency score of the winner
    winner: np.ndarray     # (S,) winning slot index


@dataclass
class Counters:
    sim_ops: int = 0       # pairwise direction similarities evaluated
    patch_ops: int = 0     # patch-cell similarity evaluations


# ----------------------------------------------------------------------
# stage 1: candidate sampling
# ----------------------------------------------------------------------
def _view_weights(pts, views, params):
    """Per-view weight (confidence x visibility) and cached projections."""
    n, nv = len(pts), len(views)
    W = np.zeros((n, nv))
    UV = np.zeros((n, nv, 2))
    Z = np.zeros((n, nv))
    for v, cam in enumerate(views):
        uv, z = cam.project_many(pts)
        UV[:, v], Z[:, v] = uv, z
        ok = (z > 0) & cam.in_frame(uv)
        if not ok.any():
            continue
        d = sample_nearest(cam.depth, uv[ok])
        vis = np.where(d > 0, np.maximum(0.0, 1.0 - np.abs(z[ok] - d) / params.eps_vis_mm), 0.0)
        conf = sample_bilinear(cam.confidence, uv[ok])
        W[ok, v] = conf * vis
    return W, UV, Z


def sample_candidates_batch(pts, views, params):
    """Candidate directions for (N, 3) points. Returns a dict of arrays."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    K, S = params.top_k, params.depth_samples
    W, UV, _ = _view_weights(pts, views, params)

    order = np.argsort(-W, axis=1, kind="stable")[:, :K]
    w_top = np.take_along_axis(W, order, axis=1)
    valid = w_top > 0
    view_idx = np.where(valid, order, -1)

    dirs = np.zeros((n, K, S, 3))
    cand_pts = np.zeros((n, K, S, 3))
    uv_p = np.zeros((n, K, 2))
    deltas = params.deltas
    for k in range(K):
        for v, cam in enumerate(views):
            sel = np.nonzero(view_idx[:, k] == v)[0]
            if len(sel) == 0:
                continue
            uv = UV[sel, v]
            uv_p[sel, k] = uv
            o = normalize(sample_bilinear(cam.orientation, uv))
            u_off = uv + params.lambda_px * o
            z_off = sample_nearest(cam.depth, u_off)
            hit = z_off > 0
            if not hit.any():
                valid[sel, k] = False
                continue
            valid[sel[~hit], k] = False
            sh = sel[hit]
            zs = z_off[hit][:, None] + deltas[None, :]            # (m, S)
            uv_rep = np.repeat(u_off[hit], S, axis=0)
            p_cand = cam.back_project_many(uv_rep, zs.reshape(-1)).reshape(-1, S, 3)
            d = p_cand - pts[sh][:, None, :]
            dirs[sh, k] = normalize(d)
            cand_pts[sh, k] = p_cand
    valid &= np.linalg.norm(dirs, axis=-1).min(axis=-1) > 0.5  # guard unfilled slots
    return {
        "view_idx": view_idx, "weights": w_top, "valid": valid,
        "dirs": dirs, "points": cand_pts, "uv": uv_p,
    }


def sample_candidates(p, views, params):
    """Spec-level single-point wrapper; raises if no view sees the point."""
    c = sample_candidates_batch(np.reshape(p, (1, 3)), views, params)
    if not c["valid"][0].any():
        raise PipelineError("no visible view for point")
    return CandidateSet(
        view_idx=c["view_idx"][0], weights=c["weights"][0], valid=c["valid"][0],
        dirs=c["dirs"][0], points=c["points"][0], uv=c["uv"][0],
    )


# ----------------------------------------------------------------------
# stage 2: medoid fusion
# ----------------------------------------------------------------------
def fuse_medoid_batch(dirs, weights, valid, counters=None):
    """Per-layer medoid directions for (N, K, S, 3) candidates.

    Returns (d_f (N, S, 3), winner (N, S), sigma (N, S)). Invalid slots carry
    zero weight and are excluded from the argmax.
    """
    n, K, S, _ = dirs.shape
    dl = np.transpose(dirs, (0, 2, 1, 3))                      # (N, S, K, 3)
    G = np.abs(np.einsum("nsik,nsjk->nsij", dl, dl))           # (N, S, K, K)
    w = np.where(valid, weights, 0.0)                          # (N, K)
    wsum = np.maximum(w.sum(axis=1), 1e-12)
    sigma = np.einsum("nsij,nj->nsi", G, w) / wsum[:, None, None]
    sigma = np.where(valid[:, None, :], sigma, -np.inf)
    winner = np.argmax(sigma, axis=2)                          # (N, S)
    d_f = np.take_along_axis(dl, winner[..., None, None], axis=2)[:, :, 0, :]
    sig_w = np.take_along_axis(sigma, winner[..., None], axis=2)[..., 0]
    if counters is not None:
        kv = valid.sum(axis=1)
        counters.sim_ops += int((kv**2).sum()) * S
    return d_f, winner, sig_w


def fuse_medoid(cands):
    """Spec-level single-point wrapper over a CandidateSet."""
    if not cands.valid.any():
        raise PipelineError("fuse_medoid: no contributing view")
    d_f, winner, sigma = fuse_medoid_batch(
        cands.dirs[None], cands.weights[None], cands.valid[None]
    )
    pl = np.transpose(cands.points, (1, 0, 2))                 # (S, K, 3)
    p_f = np.take_along_axis(pl, winner[0][:, None, None], axis=1)[:, 0, :]
    return FusedCandidates(dirs=d_f[0], points=p_f, sigma=sigma[0], winner=winner[0])


# ----------------------------------------------------------------------
# stage 3: patch refinement
# ----------------------------------------------------------------------
def _patch_offsets(P):
    h = P // 2
    dy, dx = np.mgrid[-h : h + 1, -h : h + 1]
    return dx.reshape(-1), dy.reshape(-1)


def patch_refine_batch(pts, p_f, cand, views, params, counters=None):
    """Select the depth layer with the best patch consistency per point.

    `p_f` is (N, S, 3) fused offset points. Returns (d_out (N, 3),
    ok (N,) bool); points whose view-layer pairs are all degenerate fall
    back to the direction toward the max-sigma layer by the caller.
    """
    n, S = p_f.shape[:2]
    K = cand["view_idx"].shape[1]
    P = params.patch_size
    dx, dy = _patch_offsets(P)
    score = np.zeros((n, S))
    any_pair = np.zeros((n, S), dtype=bool)

    for k in range(K):
        for v, cam in enumerate(views):
            sel = np.nonzero((cand["view_idx"][:, k] == v) & cand["valid"][:, k])[0]
            if len(sel) == 0:
                continue
            m = len(sel)
            uvp = cand["uv"][sel, k]                            # (m, 2)
            uvf, zf = cam.project_many(p_f[sel].reshape(-1, 3))
            uvf = uvf.reshape(m, S, 2)
            zf = zf.reshape(m, S)
            r = uvf - uvp[:, None, :]                           # (m, S, 2)
            rn = np.linalg.norm(r, axis=-1)
            usable = (rn > _DEGEN_PX) & (zf > 0)
            r = normalize(r)

            cu = np.rint(uvp[:, 0]).astype(np.int64)
            cv = np.rint(uvp[:, 1]).astype(np.int64)
            pu = cu[:, None] + dx[None, :]                      # (m, P^2)
            pv = cv[:, None] + dy[None, :]
            inb = (pu >= 0) & (pu < cam.width) & (pv >= 0) & (pv < cam.height)
            pu_c = np.clip(pu, 0, cam.width - 1)
            pv_c = np.clip(pv, 0, cam.height - 1)
            Op = cam.orientation[pv_c, pu_c]                    # (m, P^2, 2)
            Cp = np.where(inb, cam.confidence[pv_c, pu_c], 0.0)

            sim = np.abs(np.einsum("msk,mpk->msp", r, Op))      # (m, S, P^2)
            L = sim * Cp[:, None, :]
            Lpatch = L.max(axis=2)                              # (m, S)
            Lpatch = np.where(usable, Lpatch, 0.0)
            wv = cand["weights"][sel, k]
            score[sel] += wv[:, None] * Lpatch
            any_pair[sel] |= usable
            if counters is not None:
                counters.patch_ops += int(usable.sum()) * (P * P)

    ok = any_pair.any(axis=1)
    s_star = np.argmax(score, axis=1)
    d_sel = np.take_along_axis(p_f, s_star[:, None, None], axis=1)[:, 0, :] - pts
    return normalize(d_sel), ok, s_star


def patch_refine(p, fused, cands, views, params):
    """Spec-level single-point wrapper; falls back to the max-sigma layer."""
    d, ok, _ = patch_refine_batch(
        np.reshape(p, (1, 3)), fused.points[None], cands, views, params
    )
    if ok[0]:
        return d[0]
    s = int(np.argmax(fused.sigma))
    return normalize(fused.points[s] - np.reshape(p, (3,)))


# ----------------------------------------------------------------------
# full per-cloud optimization
# ----------------------------------------------------------------------
def _process_batch(pts, views, params, counters):
    cand = sample_candidates_batch(pts, views, params)
    visible = cand["valid"].any(axis=1)
    d_out = np.zeros((len(pts), 3))
    if visible.any():
        sub = {k: v[visible] for k, v in cand.items()}
        d_f, winner, sigma = fuse_medoid_batch(
            sub["dirs"], sub["weights"], sub["valid"], counters
        )
        pl = np.transpose(sub["points"], (0, 2, 1, 3))          # (n, S, K, 3)
        p_f = np.take_along_axis(pl, winner[..., None, None], axis=2)[:, :, 0, :]
        d, ok, _ = patch_refine_batch(pts[visible], p_f, sub, views, params, counters)
        # fallback: direction toward the offset point of the max-sigma layer
        if not ok.all():
            s_best = np.argmax(sigma, axis=1)
            fb = np.take_along_axis(p_f, s_best[:, None, None], axis=1)[:, 0, :]
            d[~ok] = normalize(fb[~ok] - pts[visible][~ok])
        d_out[visible] = d
    return visible, d_out


def optimize_outer(points, views, params=None, workers=1):
    """Optimize directions for a whole cloud.

    Returns (kept_points, directions, report). Points seen by no view are
    dropped and tallied; an empty result raises PipelineError.
    """
    if params is None:
        params = FpmvoParams()
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0 or len(views) == 0:
        raise PipelineError("optimize_outer: empty cloud or no views")
    t0 = time.perf_counter()
    nb = (len(points) + params.batch_points - 1) // params.batch_points
    batches = [points[i * params.batch_points : (i + 1) * params.batch_points] for i in range(nb)]
    counters = [Counters() for _ in range(nb)]

    def run(i):
        return _process_batch(batches[i], views, params, counters[i])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, range(nb)))
    else:
        results = [run(i) for i in range(nb)]

    keep = np.concatenate([r[0] for r in results])
    dirs = np.concatenate([r[1] for r in results])
    kept_points = points[keep]
    kept_dirs = dirs[keep]
    n_dropped = int((~keep).sum())
    if len(kept_points) == 0:
        raise PipelineError("optimize_outer: every point was dropped (nothing visible)")
    report = {
        "n_input": int(len(points)),
        "n_output": int(len(kept_points)),
        "n_dropped": n_dropped,
        "sim_ops": sum(c.sim_ops for c in counters),
        "patch_ops": sum(c.patch_ops for c in counters),
        "seconds": time.perf_counter() - t0,
    }
    return kept_points, kept_dirs, report
