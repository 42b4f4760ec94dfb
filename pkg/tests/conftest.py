import numpy as np
import pytest

from strandkit import config, pipeline, synthgen


def small_config(**overrides):
    """Reduced scene for fast tests: same geometry, fewer strands and views."""
    cfg = config.default_config()
    cfg.set("scene", "strand_count", 600)
    cfg.set("scene", "views", 8)
    cfg.set("scene", "image_size", 200)
    cfg.set("fpmvo", "shell_max_points", 15000)
    cfg.set("phg", "n_root", 4000)
    cfg.set("phg", "field_seeds", 4000)
    for dotted, value in overrides.items():
        section, key = dotted.split(".")
        cfg.set(section, key, value)
    return cfg


def tiny_config(**overrides):
    """Smallest scene that still exercises every stage; for CLI smoke tests."""
    cfg = config.default_config()
    cfg.set("scene", "strand_count", 200)
    cfg.set("scene", "views", 4)
    cfg.set("scene", "image_size", 120)
    cfg.set("fpmvo", "shell_max_points", 6000)
    cfg.set("phg", "n_root", 1500)
    cfg.set("phg", "field_seeds", 1500)
    for dotted, value in overrides.items():
        section, key = dotted.split(".")
        cfg.set(section, key, value)
    return cfg


@pytest.fixture(scope="session")
def small_scene():
    cfg = small_config()
    cameras, gt, scalp, manifest = pipeline.scene_from_config(cfg)
    return cfg, cameras, gt, scalp, manifest


@pytest.fixture(scope="session")
def small_bundle(small_scene, tmp_path_factory):
    cfg, cameras, gt, scalp, manifest = small_scene
    path = tmp_path_factory.mktemp("bundle") / "scene"
    synthgen.write_bundle(str(path), cameras, gt, scalp, manifest)
    return str(path)


@pytest.fixture(scope="session")
def default_scene():
    """Full-size reference scene shared by the end-to-end acceptance tests."""
    cfg = config.default_config()
    cameras, gt, scalp, manifest = pipeline.scene_from_config(cfg)
    return cfg, cameras, gt, scalp, manifest


@pytest.fixture(scope="session")
def default_clean_run(default_scene):
    """One full-pipeline run on the clean reference scene (reused by A2/A4)."""
    cfg, cameras, gt, scalp, _ = default_scene
    rec, report, timings, reports = pipeline.run_pipeline(cfg, cameras, gt, scalp, workers=1)
    return rec, report, timings, reports


def degraded_cameras(cameras, seed, angle_noise_deg=20.0, confidence_dropout=0.3):
    """Copies of `cameras` with maps degraded the way the pipeline seeds it."""
    import copy

    out = []
    for i, cam in enumerate(cameras):
        c = copy.copy(cam)
        O, C, D = synthgen.degrade(
            cam.orientation, cam.confidence, cam.depth,
            angle_noise_deg=angle_noise_deg,
            confidence_dropout=confidence_dropout,
            seed=seed * 1000 + 200 + i,
        )
        c.orientation = np.asarray(O, dtype=np.float32)
        c.confidence = np.asarray(C, dtype=np.float32)
        c.depth = np.asarray(D, dtype=np.float32)
        out.append(c)
    return out
