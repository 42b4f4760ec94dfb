"""Occupancy and orientation precision / recall / F1 between strand sets.

Both sets are densified to at most half a voxel per segment and voxelized
on a shared grid (origin anchored at the elementwise minimum of both
bounding boxes, so the scores are symmetric and bit-reproducible). A
reconstruction voxel is an occupancy true positive when the ground truth
occupies the same voxel; the orientation variant additionally gates on the
angle between sign-aligned per-voxel mean tangents.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .volume import voxel_mean_directions

DEFAULT_VOXEL_SIZES = (2.0, 3.0, 4.0)
DEFAULT_ANGLES = (20.0, 30.0, 40.0)


@dataclass
class MetricsReport:
    voxel_sizes: tuple
    angles: tuple
    occupancy: dict = field(default_factory=dict)    # voxel -> (P, R, F1)
    orientation: dict = field(default_factory=dict)  # (voxel, angle) -> (P, R, F1)
    gt_strands: int = 0
    rec_strands: int = 0
    gt_vertices: int = 0
    rec_vertices: int = 0
    stage_seconds: dict = field(default_factory=dict)


def _f1(p, r):
    return 2 * p * r / (p + r) if (p + r) > 0 else 0.0


def _voxel_sets(gt, rec, voxel_size, dilate=0):
    """Occupied voxel sets (linear keys) and per-voxel mean tangents."""
    gt_d = gt.resampled(voxel_size / 2.0)
    rec_d = rec.resampled(voxel_size / 2.0)
    gv, gtan = gt_d.all_vertices_tangents()
    rv, rtan = rec_d.all_vertices_tangents()
    if len(gv) == 0:
        raise DataError("empty ground-truth strand set")
    origin = np.minimum(
        gv.min(axis=0), rv.min(axis=0) if len(rv) else gv.min(axis=0)
    ) - 0.5 * voxel_size
    gidx, gdir = voxel_mean_directions(gv, gtan, origin, voxel_size)
    ridx, rdir = voxel_mean_directions(rv, rtan, origin, voxel_size) if len(rv) else (
        np.empty((0, 3), np.int64), np.empty((0, 3)))
    span = max(
        int(gidx.max(initial=0)), int(ridx.max(initial=0))
    ) + 2 * (dilate + 1)
    def lin(idx):
        return (idx[:, 0] * span + idx[:, 1]) * span + idx[:, 2]
    gt_map = dict(zip(lin(gidx).tolist(), gdir))
    if dilate:
        # optional neighborhood dilation of the GT set for sensitivity checks
        base = dict(gt_map)
        for dx in range(-dilate, dilate + 1):
            for dy in range(-dilate, dilate + 1):
                for dz in range(-dilate, dilate + 1):
                    keys = lin(gidx + np.array([dx, dy, dz]))
                    for k, d in zip(keys.tolist(), gdir):
                        gt_map.setdefault(k, d)
        gt_map.update(base)
    rec_map = dict(zip(lin(ridx).tolist(), rdir))
    return gt_map, rec_map


def occupancy_prf(gt, rec, voxel_size, dilate=0):
    """Voxel-set precision / recall / F1 at the given voxel size."""
    gt_map, rec_map = _voxel_sets(gt, rec, voxel_size, dilate)
    if not rec_map:
        return 0.0, 0.0, 0.0
    tp = sum(1 for k in rec_map if k in gt_map)
    p = tp / len(rec_map)
    r = sum(1 for k in gt_map if k in rec_map) / len(gt_map)
    return p, r, _f1(p, r)


def _orientation_from_sets(gt_map, rec_map, angle_deg):
    if not rec_map:
        return 0.0, 0.0, 0.0
    cos_gate = np.cos(np.deg2rad(angle_deg))
    tp = 0
    for k, d in rec_map.items():
        g = gt_map.get(k)
        if g is not None and abs(float(np.dot(d, g))) >= cos_gate - 1e-12:
            tp += 1
    p = tp / len(rec_map)
    r = tp / len(gt_map)
    return p, r, _f1(p, r)


def orientation_prf(gt, rec, voxel_size, angle_deg, dilate=0):
    """As occupancy_prf with an additional mod-pi angle gate on mean tangents."""
    gt_map, rec_map = _voxel_sets(gt, rec, voxel_size, dilate)
    return _orientation_from_sets(gt_map, rec_map, angle_deg)


def evaluate(gt, rec, voxel_sizes=DEFAULT_VOXEL_SIZES, angles=DEFAULT_ANGLES, dilate=0):
    """Full threshold grid: occupancy per voxel size, orientation per
    (voxel size, angle) pair (the complete cross product)."""
    report = MetricsReport(
        voxel_sizes=tuple(voxel_sizes),
        angles=tuple(angles),
        gt_strands=len(gt), rec_strands=len(rec),
        gt_vertices=gt.total_vertices(), rec_vertices=rec.total_vertices(),
    )
    for vs in voxel_sizes:
        gt_map, rec_map = _voxel_sets(gt, rec, vs, dilate)
        if not rec_map:
            report.occupancy[vs] = (0.0, 0.0, 0.0)
        else:
            tp = sum(1 for k in rec_map if k in gt_map)
            p = tp / len(rec_map)
            r = tp / len(gt_map)
            report.occupancy[vs] = (p, r, _f1(p, r))
        for ang in angles:
            report.orientation[(vs, ang)] = _orientation_from_sets(gt_map, rec_map, ang)
    return report


def format_table(report):
    """Human-readable table mirroring the threshold-grid layout."""
    lines = []
    lines.append(f"strands: gt={report.gt_strands} rec={report.rec_strands}  "
                 f"vertices: gt={report.gt_vertices} rec={report.rec_vertices}")
    lines.append(f"{'threshold':>14} {'occ P':>8} {'occ R':>8} {'occ F1':>8} "
                 f"{'ori P':>8} {'ori R':>8} {'ori F1':>8}")
    for vs in report.voxel_sizes:
        op, orr, of1 = report.occupancy[vs]
        for ang in report.angles:
            qp, qr, qf1 = report.orientation[(vs, ang)]
            lines.append(
                f"{vs:>6.1f}mm/{ang:>4.0f}d {op:8.4f} {orr:8.4f} {of1:8.4f} "
                f"{qp:8.4f} {qr:8.4f} {qf1:8.4f}"
            )
    return "\n".join(lines)


def write_csv(path, report):
    """Machine-readable counterpart of the table."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["voxel_size_mm", "angle_deg",
                     "occ_precision", "occ_recall", "occ_f1",
                     "ori_precision", "ori_recall", "ori_f1"])
        for vs in report.voxel_sizes:
            op, orr, of1 = report.occupancy[vs]
            for ang in report.angles:
                qp, qr, qf1 = report.orientation[(vs, ang)]
                wr.writerow([f"{vs:g}", f"{ang:g}",
                             f"{op:.6f}", f"{orr:.6f}", f"{of1:.6f}",
                             f"{qp:.6f}", f"{qr:.6f}", f"{qf1:.6f}"])


def plot_report(path, report):
    """Grouped bar chart of the six scores per threshold pair."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [f"{vs:g}mm/{ang:g}\N{DEGREE SIGN}"
              for vs, ang in zip(report.voxel_sizes, report.angles)]
    occ = np.array([report.occupancy[vs] for vs in report.voxel_sizes])
    ori = np.array([report.orientation[(vs, ang)]
                    for vs, ang in zip(report.voxel_sizes, report.angles)])
    x = np.arange(len(labels))
    w = 0.12
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, (name, col) in enumerate(zip(["P", "R", "F1"], ["#4878d0", "#ee854a", "#6acc64"])):
        ax.bar(x + (i - 2.5) * w, occ[:, i], w, label=f"occ {name}", color=col)
        ax.bar(x + (i + 0.5) * w, ori[:, i], w, label=f"ori {name}", color=col, alpha=0.5)
    ax.set_xticks(x, labels)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title("occupancy / orientation accuracy")
    ax.legend(ncol=3, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
