"""Declarative run configuration (YAML).

Top-level sections: ``scene``, ``sensor``, ``trajectory``, ``grid``,
``segmentation``, ``ransac``, ``polygon``, ``output``, ``ablation`` plus the
scalars ``seed``, ``threads``, ``mode`` (``voxel`` or ``heightmap``) and
``faithful``.  Missing keys take the defaults below.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

import numpy as np
import yaml

from .plane_fit import RansacParams
from .scene_sim import SensorSpec, rosette_pattern, spherical_pattern
from .segmentation import SegmentationParams

THREADS_ENV = "VOXPLANE_THREADS"


class ConfigError(ValueError):
    """Config file is malformed or has invalid values."""


DEFAULTS = {
    "seed": 0,
    "threads": None,
    "mode": "voxel",
    "faithful": False,
    "scene": {"kind": "single_stage", "params": {}, "remove": None},
    "sensor": {
        "kind": "pinhole", "width": 720, "height": 480, "hfov_deg": 87.0, "vfov_deg": 58.0,
        "max_range": 4.0, "min_range": 0.1, "noise_sigma": 0.003, "rate_hz": 30.0,
        "mount_xyz": [0.0, 0.0, 0.9], "mount_pitch_deg": 75.0, "pattern": None,
    },
    "trajectory": {"kind": "straight", "frames": 100, "rate": 30.0,
                   "start": [-0.45, 0.0, 0.4], "end": [-0.15, 0.0, 0.4], "yaw": 0.0},
    "grid": {"resolution": 0.01, "extent": [200, 200, 200], "center_offset": [0.0, 0.0, -0.6]},
    "segmentation": {"neighbor_radius": 1, "min_neighbors": 3, "max_slope_deg": 15.0,
                     "cluster_distance": 0.05, "cluster_angle_deg": 15.0,
                     "min_cluster_size": 30},
    "ransac": {"iterations": 100, "inlier_eps": 0.01},
    "polygon": {"min_area": 0.002, "refine": True},
    "heightmap": {"resolution": 0.01, "extent": [200, 200]},
    "output": {"dir": "out", "figures": True, "per_frame": True},
    "ablation": {"cluster_counts": [1, 2, 4, 8, 16], "trials": 1000,
                 "min_points": 10000, "max_points": 30000, "outlier_fraction": 0.2,
                 "noise_sigma": 0.002},
}

PRESETS = {
    # full-scale map volume: 5 m cube at 1 cm
    "full_volume": {"grid": {"extent": [500, 500, 500]}},
    "desk": {"grid": {"extent": [200, 200, 200]}},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def make_config(overrides: dict | None = None, preset: str | None = None) -> dict:
    cfg = DEFAULTS
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        cfg = _merge(cfg, PRESETS[preset])
    cfg = _merge(cfg, overrides or {})
    validate(cfg)
    return cfg


def load_config(path, overrides: dict | None = None, preset: str | None = None) -> dict:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(data) - set(DEFAULTS) - {"preset"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    preset = data.pop("preset", None) or preset
    return make_config(_merge(data, overrides or {}), preset)


def validate(cfg: dict) -> None:
    try:
        if cfg["mode"] not in ("voxel", "heightmap"):
            raise ConfigError("mode must be 'voxel' or 'heightmap'")
        g = cfg["grid"]
        if float(g["resolution"]) <= 0 or min(int(e) for e in g["extent"]) <= 0:
            raise ConfigError("grid resolution and extent must be positive")
        if len(g["extent"]) != 3 or len(g["center_offset"]) != 3:
            raise ConfigError("grid extent and center_offset need three values")
        seg_params(cfg)
        ransac_params(cfg)
        sensor_spec(cfg)
        if int(cfg["trajectory"]["frames"]) < 0:
            raise ConfigError("trajectory.frames must be >= 0")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def seg_params(cfg) -> SegmentationParams:
    return SegmentationParams(**cfg["segmentation"])


def ransac_params(cfg) -> RansacParams:
    return RansacParams(iterations=int(cfg["ransac"]["iterations"]),
                        inlier_eps=float(cfg["ransac"]["inlier_eps"]), seed=int(cfg["seed"]))


def sensor_spec(cfg) -> SensorSpec:
    s = dict(cfg["sensor"])
    pattern = s.pop("pattern", None)
    directions = None
    if s.get("kind") == "ray_pattern":
        pattern = pattern or {"type": "spherical"}
        kind = pattern.get("type", "spherical")
        kw = {k: v for k, v in pattern.items() if k != "type"}
        if kind == "rosette":
            directions = rosette_pattern(**kw)
        elif kind == "spherical":
            directions = spherical_pattern(**kw)
        else:
            raise ConfigError(f"unknown ray pattern {kind!r}")
    s["mount_xyz"] = tuple(s["mount_xyz"])
    return SensorSpec(directions=directions, **s)


def resolve_threads(cfg, cli_threads=None) -> int | None:
    if cli_threads:
        return int(cli_threads)
    if cfg.get("threads"):
        return int(cfg["threads"])
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else None


def dump_config(cfg, path) -> None:
    def plain(v):
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, (list, tuple, np.ndarray)):
            return [plain(x) for x in v]
        if isinstance(v, np.generic):
            return v.item()
        return v

    Path(path).write_text(yaml.safe_dump(plain(cfg), sort_keys=True))
