"""Parallel hair growing: batched guide-strand tracing with deferred
occupancy commits, greedy segment linking, and scalp attachment.

Seeds are traced in fixed-order batches against a frozen occupancy-counter
snapshot; counters are committed only at batch boundaries, so intra-batch
work is order-independent and the whole stage is deterministic for any
worker count. A strict mode (cap 1, per-step commit) reproduces the
classic sequential-style growing for robustness comparisons.
"""

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geom import normalize, polyline_tangents, resample_polyline_uniform
from .scalp import ScalpMesh  # noqa: F401  (re-exported: scalp type used by this stage)
from .spatial import SpatialIndex
from .strands import Strand, StrandSet
from .volume import sample_orientation_batch


@dataclass
class PhgParams:
    step_mm: float = 1.0           # trace step, default voxel_size / 2
    max_vertices: int = 400        # per traced segment
    batch_size: int = 16384        # seeds per deferred-commit batch
    occupancy_cap: int = 16        # max committed strands per voxel
    link_dist_mm: float = 2.0      # delta_d, default 2 * step
    link_angle_deg: float = 30.0   # delta_theta
    n_root: int = 30000            # scalp seed count target
    attach_radius_mm: float = 10.0
    probe_steps: int = 24          # free steps along the normal before entering the field
    min_support: float = 0.05      # trilinear occupied weight counted as being in the field
    coast_steps: int = 25          # unsupported steps tolerated before a strand ends
    steer: float = 0.0             # pull of coasting strands toward the nearest occupied voxel
    field_seeds: int = 30000       # extra bidirectional seeds in unvisited occupied voxels
    smooth: bool = True            # Laplacian pass over linked strands
    smooth_strength: float = 0.25
    smooth_iters: int = 2
    strict: bool = False           # cap-1 per-step-commit baseline mode
    tangent_window: int = 3        # trailing vertices for link tangents

    def __post_init__(self):
        if self.link_dist_mm <= 0:
            raise ConfigError("link_dist_mm must be positive")
        if not (0 < self.link_angle_deg < 90):
            raise ConfigError("link_angle_deg must be in (0, 90)")
        if self.step_mm <= 0 or self.batch_size < 1 or self.occupancy_cap < 1:
            raise ConfigError("invalid tracing parameters")


# ----------------------------------------------------------------------
# tracing
# ----------------------------------------------------------------------
def nearest_occupied_map(vol):
    """Per-voxel index of the nearest occupied voxel ((nx, ny, nz, 3) int)."""
    from scipy.ndimage import distance_transform_edt

    if not vol.occ.any():
        return None
    _, inds = distance_transform_edt(~vol.occ, return_indices=True)
    return np.stack(inds, axis=-1)


def trace_batch(vol, seed_pos, seed_dir, params, at_cap=None, live_counts=None,
                near_occ=None):
    """Trace one batch of seeds simultaneously through the orientation grid.

    `at_cap` is a frozen boolean plane marking voxels already at the
    occupancy cap; in strict mode `live_counts` is updated after every step
    and compared against cap 1 instead. `near_occ` (from
    nearest_occupied_map) lets strands that lose field support steer back
    toward the occupied set instead of coasting straight. Returns a list of
    (vertices, entered) per seed.
    """
    pos = np.asarray(seed_pos, dtype=np.float64).reshape(-1, 3).copy()
    dirn = normalize(np.asarray(seed_dir, dtype=np.float64).reshape(-1, 3))
    n = len(pos)
    counts = None
    if params.strict:
        counts = live_counts if live_counts is not None else np.zeros(vol.dims, np.uint16)

    buf = np.zeros((n, params.max_vertices, 3))
    buf[:, 0] = pos
    active = np.ones(n, dtype=bool)
    entered = np.zeros(n, dtype=bool)
    probe_left = np.full(n, params.probe_steps, dtype=np.int64)
    coast = np.zeros(n, dtype=np.int64)
    nverts = np.ones(n, dtype=np.int64)
    last_sup = np.ones(n, dtype=np.int64)
    last_vox = np.full((n, 3), -(10**9), dtype=np.int64)

    for _ in range(params.max_vertices - 1):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        o, has, support = sample_orientation_batch(vol, pos[idx], dirn[idx])
        supported = support >= params.min_support
        step_dir = np.where((has & supported)[:, None], o, dirn[idx])
        # midpoint refinement: re-sample half a step ahead so curved fields
        # are followed without accumulating first-order drift
        mid = pos[idx] + 0.5 * params.step_mm * step_dir
        o2, has2, sup2 = sample_orientation_batch(vol, mid, step_dir)
        use2 = has2 & (sup2 >= params.min_support)
        step_dir = np.where(use2[:, None], o2, step_dir)
        if near_occ is not None and params.steer > 0 and not supported.all():
            # unsupported strands bend toward the nearest occupied voxel,
            # unless it lies behind them (a genuine strand tip)
            off = np.nonzero(~supported)[0]
            pvox = np.clip(vol.voxel_of(pos[idx[off]]), 0, np.array(vol.dims) - 1)
            tgt = vol.centers(near_occ[pvox[:, 0], pvox[:, 1], pvox[:, 2]])
            pull = normalize(tgt - pos[idx[off]])
            ahead = np.einsum("ij,ij->i", pull, step_dir[off]) > -0.2
            blend = normalize(step_dir[off] + params.steer * pull)
            step_dir[off[ahead]] = blend[ahead]
        # seeds still probing keep walking along their current direction
        still_probe = ~entered[idx] & ~supported
        probe_left[idx[still_probe]] -= 1
        die = still_probe & (probe_left[idx] < 0)
        # inside the field, unsupported steps coast straight for a while
        lost = entered[idx] & ~supported
        coast[idx[lost]] += 1
        coast[idx[entered[idx] & supported]] = 0
        die |= lost & (coast[idx] > params.coast_steps)
        entered[idx[supported]] = True
        last_sup[idx[supported]] = nverts[idx[supported]]

        target = pos[idx] + params.step_mm * step_dir
        tvox = vol.voxel_of(target)
        inb = vol.in_bounds(tvox)
        die |= ~inb
        tvox_c = np.clip(tvox, 0, np.array(vol.dims) - 1)
        new_vox = np.any(tvox != last_vox[idx], axis=1)
        if params.strict:
            full = counts[tvox_c[:, 0], tvox_c[:, 1], tvox_c[:, 2]] >= 1
        elif at_cap is not None:
            full = at_cap[tvox_c[:, 0], tvox_c[:, 1], tvox_c[:, 2]]
        else:
            full = np.zeros(len(idx), dtype=bool)
        die |= entered[idx] & inb & new_vox & full

        alive = ~die
        live = idx[alive]
        buf[live, nverts[live]] = target[alive]
        nverts[live] += 1
        pos[live] = target[alive]
        dirn[live] = step_dir[alive]
        if params.strict:
            enter = alive & new_vox
            ev = tvox[enter]
            if len(ev):
                np.add.at(counts, (ev[:, 0], ev[:, 1], ev[:, 2]), 1)
        last_vox[live] = tvox[alive]
        active[idx[die]] = False

    # drop trailing coasted vertices that never regained field support
    out = []
    for i in range(n):
        keep = max(int(last_sup[i]), 1) if entered[i] else int(nverts[i])
        out.append((buf[i, :keep].copy(), bool(entered[i])))
    return out


# worker processes inherit the volume and parameters via fork; only the
# per-batch cap plane and seed slices travel over IPC
_FORK_STATE = {}


def _fork_trace(args):
    pos, dirn, packed = args
    vol = _FORK_STATE["vol"]
    params = _FORK_STATE["params"]
    at_cap = None
    if packed is not None:
        nvox = int(np.prod(vol.dims))
        bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8))[:nvox]
        at_cap = bits.astype(bool).reshape(vol.dims)
    return trace_batch(vol, pos, dirn, params, at_cap=at_cap,
                       near_occ=_FORK_STATE["near_occ"])


def _make_pool(vol, params, near_occ, workers):
    import multiprocessing as mp
    import os

    if len(os.sched_getaffinity(0)) < 2:
        # a single available core makes worker processes pure overhead
        return None
    try:
        ctx = mp.get_context("fork")
    except ValueError:
        return None
    _FORK_STATE.update(vol=vol, params=params, near_occ=near_occ)
    return ctx.Pool(workers)


def _pool_trace(pool, workers, pos, dirn, at_cap):
    packed = np.packbits(at_cap.reshape(-1)).tobytes() if at_cap.any() else None
    bounds = np.linspace(0, len(pos), workers + 1).astype(int)
    tasks = [
        (pos[bounds[w] : bounds[w + 1]], dirn[bounds[w] : bounds[w + 1]], packed)
        for w in range(workers)
        if bounds[w + 1] > bounds[w]
    ]
    return [t for part in pool.map(_fork_trace, tasks) for t in part]


def init_guide_strands(scalp, vol, params, workers=1):
    """Trace guide segments from scalp seeds in deferred-commit batches.

    Within a batch, seed slices may be traced by forked worker processes
    against the same frozen cap plane; seeds are independent and results
    are concatenated in slice order, so the output is identical for any
    worker count. Strict mode commits per step and stays serial.
    """
    seeds, normals = scalp.seeds, scalp.seed_normals
    report = {"n_seeds": int(len(seeds)), "n_segments": 0, "n_never_entered": 0}
    if len(seeds) == 0:
        report["warning"] = "no scalp seeds; nothing to trace"
        return [], report
    segments = []
    near_occ = nearest_occupied_map(vol) if params.steer > 0 else None
    pool = None
    if workers > 1 and not params.strict:
        pool = _make_pool(vol, params, near_occ, workers)
    try:
        for b0 in range(0, len(seeds), params.batch_size):
            batch_pos = seeds[b0 : b0 + params.batch_size]
            batch_dir = normals[b0 : b0 + params.batch_size]
            if params.strict:
                traced = trace_batch(vol, batch_pos, batch_dir, params,
                                     live_counts=vol.counts, near_occ=near_occ)
            else:
                at_cap = vol.counts >= params.occupancy_cap
                if pool is not None and len(batch_pos) >= 2 * workers:
                    traced = _pool_trace(pool, workers, batch_pos, batch_dir, at_cap)
                else:
                    traced = trace_batch(vol, batch_pos, batch_dir, params,
                                         at_cap=at_cap, near_occ=near_occ)
            for v, entered in traced:
                if not entered or len(v) < 2:
                    report["n_never_entered"] += int(not entered)
                    continue
                segments.append(Strand(vertices=v, rooted=True, source="traced"))
                if not params.strict:
                    vox = vol.voxel_of(v)
                    keep = vol.in_bounds(vox)
                    uniq = np.unique(vox[keep], axis=0)
                    vol.counts[uniq[:, 0], uniq[:, 1], uniq[:, 2]] += 1
        report["n_scalp_segments"] = len(segments)
        if params.field_seeds > 0:
            segments += _trace_field_seeds(vol, params, near_occ, workers, pool)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    report["n_segments"] = len(segments)
    return segments, report


def _trace_field_seeds(vol, params, near_occ, workers, pool=None):
    """Second pass: bidirectional segments from occupied voxels no scalp
    strand reached, covering regions the roots cannot flow into."""
    unvisited = np.argwhere(vol.occ & (vol.counts == 0))
    if len(unvisited) == 0:
        return []
    if len(unvisited) > params.field_seeds:
        stride = np.linspace(0, len(unvisited) - 1, params.field_seeds).astype(np.int64)
        unvisited = unvisited[stride]
    centers = vol.centers(unvisited)
    odir = vol.ori[unvisited[:, 0], unvisited[:, 1], unvisited[:, 2]].astype(np.float64)
    keep = np.linalg.norm(odir, axis=1) > 1e-9
    centers, odir = centers[keep], normalize(odir[keep])
    segments = []
    for b0 in range(0, len(centers), params.batch_size):
        cb = centers[b0 : b0 + params.batch_size]
        db = odir[b0 : b0 + params.batch_size]

        def run_dir(sign):
            if params.strict:
                return trace_batch(vol, cb, sign * db, params,
                                   live_counts=vol.counts, near_occ=near_occ)
            at_cap = vol.counts >= params.occupancy_cap
            if pool is not None and len(cb) >= 2 * workers:
                return _pool_trace(pool, workers, cb, sign * db, at_cap)
            return trace_batch(vol, cb, sign * db, params, at_cap=at_cap,
                               near_occ=near_occ)

        fwd = run_dir(1.0)
        bwd = run_dir(-1.0)
        for (vf, ef), (vb, eb) in zip(fwd, bwd):
            v = np.concatenate([vb[::-1], vf[1:]]) if len(vb) > 1 else vf
            if len(v) < 4 or not (ef or eb):
                continue
            segments.append(Strand(vertices=v, rooted=False, source="field"))
            if not params.strict:
                vox = vol.voxel_of(v)
                inb = vol.in_bounds(vox)
                uniq = np.unique(vox[inb], axis=0)
                vol.counts[uniq[:, 0], uniq[:, 1], uniq[:, 2]] += 1
    return segments


# ----------------------------------------------------------------------
# linking
# ----------------------------------------------------------------------
def _end_tangent(v, window):
    k = min(window, len(v) - 1)
    return normalize(v[-1] - v[-1 - k])


def _start_tangent(v, window):
    k = min(window, len(v) - 1)
    return normalize(v[k] - v[0])


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def compute_links(segments, params):
    """Accepted (end_i -> start_j) link pairs under the distance + angle gate.

    Greedy in ascending (distance, i, j) order; each segment is used at most
    once per side and union-find rejects cycles. Pure function so an O(n^2)
    oracle can check it exactly.
    """
    n = len(segments)
    if n == 0:
        return []
    starts = np.stack([s.vertices[0] for s in segments])
    ends = np.stack([s.vertices[-1] for s in segments])
    st = np.stack([_start_tangent(s.vertices, params.tangent_window) for s in segments])
    et = np.stack([_end_tangent(s.vertices, params.tangent_window) for s in segments])
    cos_gate = np.cos(np.deg2rad(params.link_angle_deg))

    index = SpatialIndex(starts)
    hits = index.query_radius_batch(ends, params.link_dist_mm)
    pairs = []
    for i, (ids, dists) in enumerate(hits):
        for j, d in zip(ids, dists):
            j = int(j)
            if j == i or d >= params.link_dist_mm:
                continue
            if np.dot(et[i], st[j]) > cos_gate:
                pairs.append((float(d), i, j))
    pairs.sort()

    uf = _UnionFind(n)
    end_used = [False] * n
    start_used = [False] * n
    links = []
    for d, i, j in pairs:
        if end_used[i] or start_used[j]:
            continue
        if not uf.union(i, j):
            continue
        end_used[i] = True
        start_used[j] = True
        links.append((i, j))
    return links


def _smooth(v, strength, iters):
    v = v.copy()
    for _ in range(iters):
        if len(v) < 3:
            break
        v[1:-1] += strength * (0.5 * (v[:-2] + v[2:]) - v[1:-1])
    return v


def connect_segments(segments, params):
    """Concatenate linked chains into single strands; smooth and resample."""
    links = compute_links(segments, params)
    nxt = {i: j for i, j in links}
    has_prev = {j for _, j in links}
    out = []
    for i, seg in enumerate(segments):
        if i in has_prev:
            continue
        chain = [segments[i].vertices]
        rooted = seg.rooted
        j = i
        merged = False
        while j in nxt:
            j = nxt[j]
            chain.append(segments[j].vertices)
            merged = True
        v = np.concatenate(chain) if merged else chain[0]
        if merged and params.smooth:
            v = _smooth(v, params.smooth_strength, params.smooth_iters)
        v = resample_polyline_uniform(v, params.step_mm)
        if len(v) < 2:
            continue
        out.append(Strand(vertices=v, rooted=rooted, source="linked" if merged else seg.source))
    return out


# ----------------------------------------------------------------------
# scalp attachment
# ----------------------------------------------------------------------
def attach_to_scalp(strands, scalp, r_attach):
    """Snap the nearest free endpoint of each strand to the closest scalp point."""
    index = SpatialIndex(scalp.vertices)
    out = []
    n_unrooted = 0
    for s in strands:
        if s.rooted:
            out.append(s)
            continue
        hid, hd = index.nearest(s.vertices[0])
        tid, td = index.nearest(s.vertices[-1])
        if min(hd, td) >= r_attach:
            n_unrooted += 1
            out.append(s)
            continue
        if td < hd:
            v = np.concatenate([[scalp.vertices[tid]], s.vertices[::-1]])
        else:
            v = np.concatenate([[scalp.vertices[hid]], s.vertices])
        out.append(Strand(vertices=v, rooted=True, source="attached"))
    return out, n_unrooted


# ----------------------------------------------------------------------
# full stage
# ----------------------------------------------------------------------
def grow(scalp, vol, params=None, workers=1):
    """init_guide_strands -> connect_segments -> attach_to_scalp, with timings."""
    if params is None:
        params = PhgParams()
    report = {}
    t0 = time.perf_counter()
    segments, init_report = init_guide_strands(scalp, vol, params, workers=workers)
    report["guide_init"] = init_report
    report["t_guide_init"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    strands = connect_segments(segments, params)
    report["n_after_link"] = len(strands)
    report["t_link"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    strands, n_unrooted = attach_to_scalp(strands, scalp, params.attach_radius_mm)
    report["n_unrooted"] = n_unrooted
    report["t_attach"] = time.perf_counter() - t2

    if not strands:
        report["warning"] = "empty volume or no traceable seeds; no strands grown"
    for s in strands:
        s.tangents = polyline_tangents(s.vertices)
    return StrandSet(strands), report
