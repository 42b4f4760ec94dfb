"""Command-line driver.

Subcommands: synth, extract-shell, fpmvo, volume, grow, eval, pipeline,
bench. Exit codes: 0 success, 1 usage, 2 data/config error, 3 stage failure.

Any config value can be overridden with `--section.key value` flags, e.g.
`--gabor.wavelength 6 --phg.occupancy_cap 2`.
"""

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import fpmvo, metrics, phg, synthgen, volume as vol_mod
from .config import load_config
from .errors import ConfigError, DataError, PipelineError, StrandkitError
from .pipeline import (
    extract_shell,
    fpmvo_params_from_config,
    git_revision,
    phg_params_from_config,
    plot_timings,
    run_pipeline,
    scene_from_config,
)
from .scalp import sample_seeds
from .strands import (
    read_cloud_text,
    read_strands,
    write_cloud_text,
    write_strands,
    write_strands_text,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_STAGE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _collect_overrides(extras):
    """Turn leftover `--section.key value` / `--section.key=value` flags into
    config override strings; anything else is a usage error."""
    overrides = []
    i = 0
    while i < len(extras):
        tok = extras[i]
        if not (tok.startswith("--") and "." in tok):
            raise SystemExit_usage(f"unrecognized argument: {tok}")
        body = tok[2:]
        if "=" in body:
            overrides.append(body)
            i += 1
        else:
            if i + 1 >= len(extras):
                raise SystemExit_usage(f"missing value for {tok}")
            overrides.append(f"{body}={extras[i + 1]}")
            i += 2
    return overrides


def SystemExit_usage(msg):
    print(f"error: {msg}", file=sys.stderr)
    return SystemExit(EXIT_USAGE)


def _load(args, extras):
    return load_config(args.config, _collect_overrides(extras))


def _read_bundle(path):
    return synthgen.read_bundle(path)


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------
def cmd_synth(args, extras):
    cfg = _load(args, extras)
    cameras, gt, scalp, manifest = scene_from_config(cfg)
    synthgen.write_bundle(args.out, cameras, gt, scalp, manifest)
    print(f"wrote scene bundle to {args.out}: {len(cameras)} views, "
          f"{len(gt)} GT strands (seed {cfg.get('run', 'seed')})")
    return EXIT_OK


def cmd_extract_shell(args, extras):
    cfg = _load(args, extras)
    cameras, _, _, _ = _read_bundle(args.bundle)
    pts = extract_shell(
        cameras,
        max_points=cfg.get("fpmvo", "shell_max_points"),
        dedup_mm=cfg.get("fpmvo", "shell_dedup_mm"),
    )
    write_cloud_text(args.out, pts)
    print(f"extracted {len(pts)} shell points -> {args.out}")
    return EXIT_OK


def cmd_fpmvo(args, extras):
    cfg = _load(args, extras)
    cameras, _, _, _ = _read_bundle(args.bundle)
    pts, _ = read_cloud_text(args.shell)
    out_pts, out_dirs, rep = fpmvo.optimize_outer(
        pts, cameras, fpmvo_params_from_config(cfg), workers=cfg.get("run", "workers")
    )
    write_cloud_text(args.out, out_pts, out_dirs)
    if args.report:
        with open(args.report, "w") as f:
            json.dump(rep, f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"optimized {rep['n_output']}/{rep['n_input']} points "
          f"({rep['n_dropped']} dropped) -> {args.out}")
    return EXIT_OK


def cmd_volume(args, extras):
    cfg = _load(args, extras)
    _, _, scalp, _ = _read_bundle(args.bundle)
    pts, dirs = read_cloud_text(args.cloud)
    if dirs is None:
        raise DataError(f"{args.cloud}: expected an oriented cloud (6 columns)")
    vol = vol_mod.voxelize(pts, dirs, voxel_size=cfg.get("volume", "voxel_size"))
    if cfg.get("volume", "fill"):
        vol_mod.fill_interior(vol, scalp)
    vol_mod.write_volume(args.out, vol)
    print(f"volume {vol.dims} at {vol.voxel_size:g}mm, "
          f"{int(vol.occ.sum())} occupied voxels -> {args.out}")
    return EXIT_OK


def cmd_grow(args, extras):
    cfg = _load(args, extras)
    _, _, scalp, _ = _read_bundle(args.bundle)
    vol = vol_mod.read_volume(args.volume)
    params = phg_params_from_config(cfg)
    sample_seeds(scalp, params.n_root, seed=cfg.get("run", "seed") * 1000 + 7)
    sset, rep = phg.grow(scalp, vol, params, workers=cfg.get("run", "workers"))
    write_strands(args.out, sset)
    if args.text:
        write_strands_text(args.text, sset)
    print(f"grew {len(sset)} strands -> {args.out}")
    if "warning" in rep:
        print(f"warning: {rep['warning']}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args, extras):
    cfg = _load(args, extras)
    _, gt, _, _ = _read_bundle(args.bundle)
    rec = read_strands(args.strands)
    report = metrics.evaluate(
        gt, rec,
        voxel_sizes=cfg.float_list("metrics", "voxel_sizes"),
        angles=cfg.float_list("metrics", "angles"),
        dilate=cfg.get("metrics", "dilate"),
    )
    os.makedirs(args.out_dir, exist_ok=True)
    metrics.write_csv(os.path.join(args.out_dir, "metrics.csv"), report)
    metrics.plot_report(os.path.join(args.out_dir, "metrics.png"), report)
    table = metrics.format_table(report)
    with open(os.path.join(args.out_dir, "metrics.txt"), "w") as f:
        f.write(table + "\n")
    print(table)
    return EXIT_OK


def cmd_pipeline(args, extras):
    cfg = _load(args, extras)
    if args.workers is not None:
        cfg.set("run", "workers", args.workers)
    cameras, gt, scalp, _ = _read_bundle(args.bundle)
    rec, report, timings, reports = run_pipeline(cfg, cameras, gt, scalp)
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    write_strands(os.path.join(out, "strands.bin"), rec)
    metrics.write_csv(os.path.join(out, "metrics.csv"), report)
    metrics.plot_report(os.path.join(out, "metrics.png"), report)
    table = metrics.format_table(report)
    with open(os.path.join(out, "metrics.txt"), "w") as f:
        f.write(table + "\n")
    plot_timings(os.path.join(out, "timing.png"), timings)
    manifest = {
        "config_hash": cfg.hash(),
        "seed": cfg.get("run", "seed"),
        "workers": cfg.get("run", "workers"),
        "git_revision": git_revision(),
        "stage_timings_s": {k: round(v, 4) for k, v in timings.items()},
        "stage_reports": reports,
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    print(table)
    print("timings: " + "  ".join(f"{k}={v:.1f}s" for k, v in timings.items()))
    return EXIT_OK


def cmd_bench(args, extras):
    cfg = _load(args, extras)
    cameras, _, scalp, _ = _read_bundle(args.bundle)
    worker_counts = cfg.int_list("bench", "workers")
    shell = extract_shell(
        cameras,
        max_points=cfg.get("fpmvo", "shell_max_points"),
        dedup_mm=cfg.get("fpmvo", "shell_dedup_mm"),
    )
    fparams = fpmvo_params_from_config(cfg)
    pparams = phg_params_from_config(cfg)
    rows = []
    base = {}
    for t in worker_counts:
        t0 = time.perf_counter()
        pts, dirs, _ = fpmvo.optimize_outer(shell, cameras, fparams, workers=t)
        dt = time.perf_counter() - t0
        base.setdefault("fpmvo", dt)
        rows.append(("fpmvo", t, dt, base["fpmvo"] / dt))

        vol = vol_mod.voxelize(pts, dirs, voxel_size=cfg.get("volume", "voxel_size"))
        if cfg.get("volume", "fill"):
            vol_mod.fill_interior(vol, scalp)
        sample_seeds(scalp, pparams.n_root, seed=cfg.get("run", "seed") * 1000 + 7)
        vol.counts[:] = 0
        t1 = time.perf_counter()
        phg.init_guide_strands(scalp, vol, pparams, workers=t)
        dt = time.perf_counter() - t1
        base.setdefault("phg_trace", dt)
        rows.append(("phg_trace", t, dt, base["phg_trace"] / dt))

    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "bench.csv")
    with open(csv_path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["stage", "workers", "seconds", "speedup"])
        for stage, t, secs, sp in rows:
            wr.writerow([stage, t, f"{secs:.4f}", f"{sp:.4f}"])

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for stage in ("fpmvo", "phg_trace"):
        pts_ = [(t, sp) for s, t, _, sp in rows if s == stage]
        ax.plot([p[0] for p in pts_], [p[1] for p in pts_], "o-", label=stage)
    ax.plot(worker_counts, worker_counts, "k--", alpha=0.3, label="ideal")
    ax.set_xlabel("workers")
    ax.set_ylabel("speedup")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(args.out_dir, "bench.png"), dpi=120)
    plt.close(fig)
    for stage, t, secs, sp in rows:
        print(f"{stage:10s} workers={t} {secs:8.2f}s speedup={sp:.2f}")
    return EXIT_OK


# ----------------------------------------------------------------------
def build_parser():
    p = _Parser(prog="strandkit", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, **kw):
        sp = sub.add_parser(name, **kw)
        sp.add_argument("--config", default=None, help="INI config file")
        sp.set_defaults(fn=fn)
        return sp

    sp = add("synth", cmd_synth, help="generate a synthetic scene bundle")
    sp.add_argument("--out", required=True)

    sp = add("extract-shell", cmd_extract_shell, help="back-project depth maps to a shell cloud")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--out", required=True)

    sp = add("fpmvo", cmd_fpmvo, help="multi-view direction optimization of a shell cloud")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--shell", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--report", default=None)

    sp = add("volume", cmd_volume, help="voxelize an oriented cloud and fill the interior")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--cloud", required=True)
    sp.add_argument("--out", required=True)

    sp = add("grow", cmd_grow, help="grow strands through an occupancy-orientation volume")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--volume", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--text", default=None, help="also write a text exporter dump")

    sp = add("eval", cmd_eval, help="occupancy/orientation metrics vs ground truth")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--strands", required=True)
    sp.add_argument("--out-dir", required=True)

    sp = add("pipeline", cmd_pipeline, help="run the full reconstruction pipeline")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--workers", type=int, default=None)

    sp = add("bench", cmd_bench, help="worker-scaling benchmark CSV + plot")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--out-dir", required=True)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        return args.fn(args, extras)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    except (ConfigError, DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (PipelineError, StrandkitError) as e:
        print(f"stage failure: {e}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
