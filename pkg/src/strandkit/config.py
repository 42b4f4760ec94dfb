"""Pipeline configuration: INI file with sections, CLI overrides on top.

Unknown sections or keys are rejected. Precedence: built-in defaults,
then the config file, then `--section.key value` command-line overrides.
"""

import configparser
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError

# section -> key -> (type, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "workers": (int, 1),
    },
    "scene": {
        "style": (str, "straight"),
        "strand_count": (int, 5000),
        "length_min": (float, 50.0),
        "length_max": (float, 90.0),
        "gravity_rate": (float, 0.02),
        "wave_amplitude": (float, 6.0),
        "wave_length": (float, 30.0),
        "helix_radius": (float, 8.0),
        "helix_pitch": (float, 15.0),
        "vertex_step": (float, 1.0),
        "scalp_radius": (float, 50.0),
        "cap_fraction": (float, 0.5),
        "views": (int, 16),
        "image_size": (int, 400),
        "orbit_radius": (float, 300.0),
        "line_width_px": (float, 2.0),
        "use_gabor": (bool, False),
        "angle_noise_deg": (float, 0.0),
        "confidence_dropout": (float, 0.0),
        "depth_noise_mm": (float, 0.0),
    },
    "gabor": {
        "num_orientations": (int, 32),
        "wavelength": (float, 4.0),
        "sigma": (float, 2.0),
        "kernel_size": (int, 21),
    },
    "fpmvo": {
        "lambda_px": (float, 5.0),
        "delta_mm": (float, 5.0),
        "depth_samples": (int, 11),
        "top_k": (int, 5),
        "patch_size": (int, 5),
        "eps_vis_mm": (float, 5.0),
        "batch_points": (int, 8192),
        "shell_max_points": (int, 60000),
        "shell_dedup_mm": (float, 1.0),
    },
    "volume": {
        "voxel_size": (float, 2.0),
        "fill": (bool, True),
        "fill_depth_mm": (float, 6.0),
    },
    "phg": {
        "step_mm": (float, 1.0),
        "max_vertices": (int, 400),
        "batch_size": (int, 16384),
        "occupancy_cap": (int, 16),
        "link_dist_mm": (float, 2.0),
        "link_angle_deg": (float, 30.0),
        "n_root": (int, 30000),
        "attach_radius_mm": (float, 10.0),
        "probe_steps": (int, 24),
        "min_support": (float, 0.05),
        "coast_steps": (int, 25),
        "steer": (float, 0.0),
        "field_seeds": (int, 30000),
        "smooth": (bool, True),
        "strict": (bool, False),
    },
    "metrics": {
        "voxel_sizes": (str, "2,3,4"),
        "angles": (str, "20,30,40"),
        "dilate": (int, 0),
    },
    "bench": {
        "workers": (str, "1,2,4,8"),
    },
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(section, key, raw):
    typ, _ = SCHEMA[section][key]
    if isinstance(raw, typ) and not isinstance(raw, str):
        return raw
    s = str(raw).strip()
    if typ is bool:
        low = s.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    try:
        return typ(s)
    except ValueError as e:
        raise ConfigError(f"[{section}] {key}: {e}") from e


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=dict)  # section -> key -> value

    def __getitem__(self, section):
        return self.values[section]

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, raw):
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values[section][key] = _coerce(section, key, raw)

    def float_list(self, section, key):
        raw = self.get(section, key)
        try:
            return tuple(float(x) for x in str(raw).split(",") if x.strip())
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}") from e

    def int_list(self, section, key):
        return tuple(int(x) for x in self.float_list(section, key))

    def hash(self):
        """Stable digest of the effective configuration."""
        blob = json.dumps(self.values, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self):
        return {s: dict(kv) for s, kv in self.values.items()}


def default_config():
    cfg = PipelineConfig({s: {k: d for k, (_, d) in kv.items()} for s, kv in SCHEMA.items()})
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, optionally updated from an INI file, then CLI overrides.

    `overrides` is an iterable of 'section.key=value' strings.
    """
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}] in {path}")
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not of the form section.key=value")
        lhs, value = ov.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override {ov!r} is not of the form section.key=value")
        section, key = lhs.lstrip("-").split(".", 1)
        cfg.set(section, key, value)
    return cfg
