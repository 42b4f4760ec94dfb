"""End-to-end orchestration shared by the CLI and the acceptance tests."""

import subprocess
import time

import numpy as np

from . import fpmvo, metrics, orient2d, phg, synthgen, volume as vol_mod
from .camera import DEPTH_SENTINEL
from .errors import PipelineError
from .scalp import generate_scalp


def scene_from_config(cfg):
    """Build a full synthetic scene bundle in memory from [scene] settings."""
    seed = cfg.get("run", "seed")
    sc = cfg["scene"]
    scalp = generate_scalp(sc["scalp_radius"], sc["cap_fraction"])
    style = synthgen.StyleParams(
        style=sc["style"],
        strand_count=sc["strand_count"],
        length_min=sc["length_min"],
        length_max=sc["length_max"],
        gravity_rate=sc["gravity_rate"],
        wave_amplitude=sc["wave_amplitude"],
        wave_length=sc["wave_length"],
        helix_radius=sc["helix_radius"],
        helix_pitch=sc["helix_pitch"],
        vertex_step=sc["vertex_step"],
        seed=seed,
    )
    gt = synthgen.generate_strands(scalp, style)
    verts, _ = gt.all_vertices_tangents()
    target = 0.5 * (verts.min(axis=0) + verts.max(axis=0))
    cameras = synthgen.make_orbit_rig(
        n_views=sc["views"],
        image_size=sc["image_size"],
        target=target,
        orbit_radius=sc["orbit_radius"],
    )
    bank = None
    if sc["use_gabor"]:
        g = cfg["gabor"]
        bank = orient2d.build_bank(
            g["num_orientations"], g["wavelength"], g["sigma"], g["kernel_size"]
        )
    for i, cam in enumerate(cameras):
        O, C, D, gray = synthgen.render_maps(gt, cam, line_width_px=sc["line_width_px"])
        if bank is not None:
            field = orient2d.extract(gray, bank)
            O = field.O.astype(np.float32)
            C = (field.C * (D > 0)).astype(np.float32)
        if sc["angle_noise_deg"] or sc["confidence_dropout"] or sc["depth_noise_mm"]:
            O, C, D = synthgen.degrade(
                O, C, D,
                angle_noise_deg=sc["angle_noise_deg"],
                confidence_dropout=sc["confidence_dropout"],
                depth_noise_mm=sc["depth_noise_mm"],
                seed=seed * 1000 + 200 + i,
            )
        cam.orientation = np.asarray(O, dtype=np.float32)
        cam.confidence = np.asarray(C, dtype=np.float32)
        cam.depth = np.asarray(D, dtype=np.float32)
        cam.image = gray
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "seed": seed,
        "git_revision": git_revision(),
        "n_views": len(cameras),
        "target": [float(x) for x in target],
    }
    return cameras, gt, scalp, manifest


def extract_shell(cameras, max_points=60000, dedup_mm=1.0):
    """Back-project every valid depth pixel, deduplicate on a fine voxel grid.

    The deterministic stand-in for coarse scene reconstruction: returns the
    outer-shell point cloud consumed by the direction optimizer.
    """
    pts = []
    for cam in cameras:
        v, u = np.nonzero(cam.depth > 0)
        if len(u) == 0:
            continue
        uv = np.stack([u, v], axis=1).astype(np.float64)
        z = cam.depth[v, u].astype(np.float64)
        pts.append(cam.back_project_many(uv, z))
    if not pts:
        raise PipelineError("extract_shell: no valid depth pixels in any view")
    pts = np.concatenate(pts)
    # one representative point per dedup voxel, first in lexicographic order
    idx = np.floor(pts / dedup_mm).astype(np.int64)
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0],
                        idx[:, 2], idx[:, 1], idx[:, 0]))
    idx_s = idx[order]
    first = np.concatenate([[True], np.any(idx_s[1:] != idx_s[:-1], axis=1)])
    pts = pts[order][first]
    if len(pts) > max_points:
        stride = np.linspace(0, len(pts) - 1, max_points).astype(np.int64)
        pts = pts[stride]
    return pts


def fpmvo_params_from_config(cfg):
    f = cfg["fpmvo"]
    return fpmvo.FpmvoParams(
        lambda_px=f["lambda_px"], delta_mm=f["delta_mm"],
        depth_samples=f["depth_samples"], top_k=f["top_k"],
        patch_size=f["patch_size"], eps_vis_mm=f["eps_vis_mm"],
        batch_points=f["batch_points"],
    )


def phg_params_from_config(cfg):
    p = cfg["phg"]
    return phg.PhgParams(
        step_mm=p["step_mm"], max_vertices=p["max_vertices"],
        batch_size=p["batch_size"], occupancy_cap=p["occupancy_cap"],
        link_dist_mm=p["link_dist_mm"], link_angle_deg=p["link_angle_deg"],
        n_root=p["n_root"], attach_radius_mm=p["attach_radius_mm"],
        probe_steps=p["probe_steps"], min_support=p["min_support"],
        coast_steps=p["coast_steps"], steer=p["steer"],
        field_seeds=p["field_seeds"],
        smooth=p["smooth"], strict=p["strict"],
    )


def run_pipeline(cfg, cameras, gt, scalp, workers=None):
    """Shell extraction -> direction optimization -> volume -> growing -> eval.

    Returns (strand set, metrics report, timing dict, stage reports).
    """
    from .scalp import sample_seeds

    if workers is None:
        workers = cfg.get("run", "workers")
    timings = {}
    reports = {}

    t0 = time.perf_counter()
    shell = extract_shell(
        cameras,
        max_points=cfg.get("fpmvo", "shell_max_points"),
        dedup_mm=cfg.get("fpmvo", "shell_dedup_mm"),
    )
    timings["shell_extraction"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    pts, dirs, rep = fpmvo.optimize_outer(
        shell, cameras, fpmvo_params_from_config(cfg), workers=workers
    )
    reports["fpmvo"] = rep
    timings["outer_optimization"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    vol = vol_mod.voxelize(pts, dirs, voxel_size=cfg.get("volume", "voxel_size"))
    if cfg.get("volume", "fill"):
        depth = cfg.get("volume", "fill_depth_mm")
        vol_mod.fill_interior(vol, scalp, max_depth_mm=depth if depth > 0 else None)
    timings["inner_fill"] = time.perf_counter() - t2

    t3 = time.perf_counter()
    params = phg_params_from_config(cfg)
    sample_seeds(scalp, params.n_root, seed=cfg.get("run", "seed") * 1000 + 7)
    rec, grow_rep = phg.grow(scalp, vol, params, workers=workers)
    reports["phg"] = {k: v for k, v in grow_rep.items()}
    timings["hair_growing"] = time.perf_counter() - t3
    timings["hair_growing_guide_init"] = grow_rep.get("t_guide_init", 0.0)
    timings["hair_growing_link"] = grow_rep.get("t_link", 0.0)
    timings["hair_growing_attach"] = grow_rep.get("t_attach", 0.0)

    t4 = time.perf_counter()
    report = metrics.evaluate(
        gt, rec,
        voxel_sizes=cfg.float_list("metrics", "voxel_sizes"),
        angles=cfg.float_list("metrics", "angles"),
        dilate=cfg.get("metrics", "dilate"),
    )
    report.stage_seconds = dict(timings)
    timings["evaluation"] = time.perf_counter() - t4
    return rec, report, timings, reports


def git_revision():
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
        )
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def plot_timings(path, timings):
    """Stacked horizontal bar of the pipeline stage wall-clock breakdown."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    stages = [
        ("outer point cloud optimization",
         timings.get("shell_extraction", 0.0) + timings.get("outer_optimization", 0.0)),
        ("inner point cloud stand-in", timings.get("inner_fill", 0.0)),
        ("guide strand init", timings.get("hair_growing_guide_init", 0.0)),
        ("segment growth/connection", timings.get("hair_growing_link", 0.0)),
        ("scalp attachment", timings.get("hair_growing_attach", 0.0)),
    ]
    fig, ax = plt.subplots(figsize=(7, 2.6))
    left = 0.0
    colors = ["#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4"]
    for (name, secs), col in zip(stages, colors):
        ax.barh([0], [secs], left=left, label=f"{name} ({secs:.1f}s)", color=col)
        left += secs
    ax.set_yticks([])
    ax.set_xlabel("seconds")
    ax.set_title("pipeline time breakdown")
    ax.legend(loc="upper center", bbox_to_anchor=(0.5, -0.35), ncol=2, fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
