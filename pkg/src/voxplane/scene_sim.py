"""Analytic test scenes, simulated depth sensors and scripted robot motion.

Scenes are built from axis-aligned boxes and oriented rectangles.  Every
scene lists its ground-truth planar regions as convex polygons so detections
can be scored without access to the renderer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import Pose, SensorFrame
from .plane_fit import PlaneModel
from .polygonize import PlanePolygon, convex_hull, lift_to_plane, project_to_plane, shoelace


class SceneKind(str, enum.Enum):
    STAIR5 = "stair5"
    SINGLE_STAGE = "single_stage"
    OVERHANG = "overhang"
    SMALL_OBSTACLE = "small_obstacle"
    BOX_ON_FLOOR = "box_on_floor"


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    name: str = ""


@dataclass(frozen=True)
class Rect:
    """Two-sided rectangle: ``center + a*u + b*v`` with ``|a| <= half[0]``, ``|b| <= half[1]``."""

    center: tuple
    u: tuple
    v: tuple
    half: tuple
    name: str = ""


@dataclass
class Scene:
    kind: str
    primitives: list
    ground_truth: list = field(default_factory=list)   # PlanePolygon, label = region id
    params: dict = field(default_factory=dict)

    def without(self, name: str) -> "Scene":
        """Copy with the named primitive (and its truth regions) removed."""
        prims = [p for p in self.primitives if p.name != name]
        gt = [g for g in self.ground_truth if getattr(g, "source", "") != name]
        return Scene(self.kind, prims, gt, dict(self.params))


def _truth_polygon(region_id, normal, corners, source="") -> PlanePolygon:
    n = np.asarray(normal, dtype=np.float64)
    n /= np.linalg.norm(n)
    corners = np.asarray(corners, dtype=np.float64)
    offset = float(np.mean(corners @ n))
    plane = PlaneModel(n, offset, 0, int(region_id))
    hull = convex_hull(project_to_plane(plane, corners), prefilter=False)
    return PlanePolygon(plane, hull, lift_to_plane(plane, hull), shoelace(hull), source=source)


def _horizontal_rect(region_id, x0, x1, y0, y1, z, source=""):
    return _truth_polygon(region_id, (0, 0, 1),
                          [(x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z)], source)


def _vertical_rect_x(region_id, x, y0, y1, z0, z1, normal_sign=-1.0, source=""):
    return _truth_polygon(region_id, (normal_sign, 0, 0),
                          [(x, y0, z0), (x, y1, z0), (x, y1, z1), (x, y0, z1)], source)


def build_scene(kind, **params) -> Scene:
    """Deterministic scene of the given kind; dimensions in meters."""
    kind = SceneKind(kind)
    floor_thickness = 0.05
    if kind is SceneKind.STAIR5:
        p = dict(rise=0.17, run=0.29, width=1.0, steps=5, x0=0.5, approach=1.2)
        p.update(params)
        if min(p["rise"], p["run"], p["width"]) <= 0:
            raise ValueError("stair dimensions must be positive")
        rise, run, w, n, x0 = p["rise"], p["run"], p["width"], int(p["steps"]), p["x0"]
        x_end = x0 + n * run
        gx0 = x0 - p["approach"]
        prims = [Box((gx0, -w / 2, -floor_thickness), (x_end, w / 2, 0.0), "floor")]
        gt = [_horizontal_rect(0, gx0, x0, -w / 2, w / 2, 0.0, "floor")]
        for k in range(n):
            prims.append(Box((x0 + k * run, -w / 2, 0.0), (x_end, w / 2, (k + 1) * rise), f"step{k}"))
            gt.append(_horizontal_rect(1 + k, x0 + k * run, x0 + (k + 1) * run, -w / 2, w / 2,
                                       (k + 1) * rise, f"step{k}"))
        for k in range(n):
            gt.append(_vertical_rect_x(1 + n + k, x0 + k * run, -w / 2, w / 2, k * rise,
                                       (k + 1) * rise, source=f"step{k}"))
        return Scene(kind.value, prims, gt, p)

    if kind is SceneKind.SINGLE_STAGE:
        p = dict(height=0.2, size=0.6, ground=1.4, center=(0.0, 0.0))
        p.update(params)
        if min(p["height"], p["size"], p["ground"]) <= 0:
            raise ValueError("stage dimensions must be positive")
        g, s, h = p["ground"] / 2, p["size"] / 2, p["height"]
        cx, cy = p["center"]
        prims = [Box((-g, -g, -floor_thickness), (g, g, 0.0), "floor"),
                 Box((cx - s, cy - s, 0.0), (cx + s, cy + s, h), "stage")]
        gt = [_horizontal_rect(0, -g, g, -g, g, 0.0, "floor"),
              _horizontal_rect(1, cx - s, cx + s, cy - s, cy + s, h, "stage")]
        return Scene(kind.value, prims, gt, p)

    if kind is SceneKind.OVERHANG:
        p = dict(clearance=0.45, thickness=0.04, ground=(1.6, 1.2), span=(0.2, 0.8))
        p.update(params)
        if p["clearance"] <= 0 or p["thickness"] <= 0:
            raise ValueError("overhang dimensions must be positive")
        gx, gy = p["ground"][0] / 2, p["ground"][1] / 2
        a, b = p["span"]
        c, t = p["clearance"], p["thickness"]
        prims = [Box((-gx, -gy, -floor_thickness), (gx, gy, 0.0), "floor"),
                 Box((a, -gy, c), (b, gy, c + t), "slab")]
        gt = [_horizontal_rect(0, -gx, gx, -gy, gy, 0.0, "floor"),
              _horizontal_rect(1, a, b, -gy, gy, c, "slab")]
        return Scene(kind.value, prims, gt, p)

    if kind is SceneKind.SMALL_OBSTACLE:
        p = dict(size=(0.07, 0.10, 0.08), ground=1.4, center=(0.4, 0.0))
        p.update(params)
        sx, sy, sz = p["size"]
        if min(sx, sy, sz) <= 0:
            raise ValueError("obstacle dimensions must be positive")
        g = p["ground"] / 2
        cx, cy = p["center"]
        prims = [Box((-g, -g, -floor_thickness), (g, g, 0.0), "floor"),
                 Box((cx - sx / 2, cy - sy / 2, 0.0), (cx + sx / 2, cy + sy / 2, sz), "obstacle")]
        gt = [_horizontal_rect(0, -g, g, -g, g, 0.0, "floor"),
              _horizontal_rect(1, cx - sx / 2, cx + sx / 2, cy - sy / 2, cy + sy / 2, sz, "obstacle")]
        return Scene(kind.value, prims, gt, p)

    # BOX_ON_FLOOR: movable box for the dynamic-clearing scenario
    p = dict(size=0.3, ground=1.4, center=(0.0, 0.0))
    p.update(params)
    g, s = p["ground"] / 2, p["size"] / 2
    cx, cy = p["center"]
    prims = [Box((-g, -g, -floor_thickness), (g, g, 0.0), "floor"),
             Box((cx - s, cy - s, 0.0), (cx + s, cy + s, 2 * s), "box")]
    gt = [_horizontal_rect(0, -g, g, -g, g, 0.0, "floor"),
          _horizontal_rect(1, cx - s, cx + s, cy - s, cy + s, 2 * s, "box")]
    return Scene(kind.value, prims, gt, p)


# sensors --------------------------------------------------------------------

class SensorKind(str, enum.Enum):
    PINHOLE = "pinhole"
    RAY_PATTERN = "ray_pattern"


@dataclass
class SensorSpec:
    kind: SensorKind = SensorKind.PINHOLE
    width: int = 720
    height: int = 480
    hfov_deg: float = 87.0
    vfov_deg: float = 58.0
    max_range: float = 4.0
    min_range: float = 0.1
    noise_sigma: float = 0.003
    rate_hz: float = 30.0
    directions: np.ndarray | None = field(default=None, repr=False)
    # sensor mount on the robot base: translation and downward pitch
    mount_xyz: tuple = (0.0, 0.0, 0.0)
    mount_pitch_deg: float = 0.0

    def __post_init__(self):
        self.kind = SensorKind(self.kind)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.kind is SensorKind.PINHOLE:
            for fov in (self.hfov_deg, self.vfov_deg):
                if not 0.0 < fov < 180.0:
                    raise ValueError("field of view must lie in (0, 180) degrees")
        elif self.directions is None:
            raise ValueError("ray-pattern sensors need a direction list")

    def mount(self) -> Pose:
        return Pose(rot_y(math.radians(self.mount_pitch_deg)), np.asarray(self.mount_xyz, float))

    def ray_directions(self) -> np.ndarray:
        """Unit directions in the sensor frame (x forward, y left, z up)."""
        if self.kind is SensorKind.RAY_PATTERN:
            d = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
            return d / np.linalg.norm(d, axis=1, keepdims=True)
        th = math.tan(math.radians(self.hfov_deg) / 2)
        tv = math.tan(math.radians(self.vfov_deg) / 2)
        # row 0 is the bottom image row
        cols = (2.0 * (np.arange(self.width) + 0.5) / self.width - 1.0) * th
        rows = (2.0 * (np.arange(self.height) + 0.5) / self.height - 1.0) * tv
        yy, zz = np.meshgrid(-cols, rows)
        d = np.stack([np.ones_like(yy), yy, zz], axis=-1).reshape(-1, 3)
        return d / np.linalg.norm(d, axis=1, keepdims=True)


def d435(**overrides) -> SensorSpec:
    return replace(SensorSpec(), **overrides)


def rosette_pattern(n=20000, fov_deg=70.0, petals=7.0, turns=29.0) -> np.ndarray:
    """Lissajous-style rosette inside a forward-looking cone."""
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    r = math.tan(math.radians(fov_deg) / 2) * np.abs(np.sin(petals * t))
    phi = turns * t / petals
    d = np.stack([np.ones(n), r * np.cos(phi), r * np.sin(phi)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def spherical_pattern(n_az=360, n_el=32, el_min_deg=-7.0, el_max_deg=52.0) -> np.ndarray:
    """Uniform azimuth x elevation rings (spinning multi-beam LiDAR)."""
    az = np.linspace(0.0, 2 * np.pi, n_az, endpoint=False)
    el = np.radians(np.linspace(el_min_deg, el_max_deg, n_el))
    A, E = np.meshgrid(az, el)
    d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
    return d.reshape(-1, 3)


# geometry -------------------------------------------------------------------

def rot_z(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(pitch):
    """Rotation about +y; positive pitch tilts the x axis downward."""
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _box_hits(o, d, box):
    lo = np.asarray(box.lo, float)
    hi = np.asarray(box.hi, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    t1 = np.where(np.isnan(t1), -np.inf, t1)
    t2 = np.where(np.isnan(t2), np.inf, t2)
    tmin = np.max(np.minimum(t1, t2), axis=1)
    tmax = np.min(np.maximum(t1, t2), axis=1)
    t = np.where(tmin > 0.0, tmin, tmax)
    ok = (tmax >= np.maximum(tmin, 0.0)) & (t > 0.0)
    return np.where(ok, t, np.inf)


def _rect_hits(o, d, rect):
    c = np.asarray(rect.center, float)
    u = np.asarray(rect.u, float)
    v = np.asarray(rect.v, float)
    n = np.cross(u, v)
    denom = d @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((c - o) @ n) / denom
    p = o + t[:, None] * d
    a = (p - c) @ u
    b = (p - c) @ v
    ok = (np.abs(denom) > 1e-12) & (t > 0) & (np.abs(a) <= rect.half[0]) & (np.abs(b) <= rect.half[1])
    return np.where(ok, t, np.inf)


def cast_rays(scene: Scene, origin, directions) -> np.ndarray:
    """Distance to the first hit along each unit direction (inf on miss)."""
    o = np.asarray(origin, dtype=np.float64)
    best = np.full(len(directions), np.inf)
    for prim in scene.primitives:
        t = _box_hits(o, directions, prim) if isinstance(prim, Box) else _rect_hits(o, directions, prim)
        np.minimum(best, t, out=best)
    return best


def truncated_normal(rng, n: int, limit: float) -> np.ndarray:
    """Standard normal samples with ``|z| <= limit``, redrawing the rest."""
    z = rng.standard_normal(n)
    bad = np.flatnonzero(np.abs(z) > limit)
    while len(bad):
        z[bad] = rng.standard_normal(len(bad))
        bad = bad[np.abs(z[bad]) > limit]
    return z


def sensor_pose(sensor: SensorSpec, base_pose: Pose) -> Pose:
    return base_pose.compose(sensor.mount())


def render_frame(scene: Scene, sensor: SensorSpec, pose: Pose, rng=None, timestamp=0.0) -> SensorFrame:
    """Simulated scan from a sensor at ``pose`` (sensor -> world).

    Hits get Gaussian range noise along the ray, truncated at 3 sigma; misses and returns outside
    ``[min_range, max_range]`` are dropped.
    """
    pose.validate()
    rng = np.random.default_rng(rng)
    d_s = sensor.ray_directions()
    d_w = d_s @ pose.rotation.T
    t = cast_rays(scene, pose.translation, d_w)
    hit = np.isfinite(t) & (t >= sensor.min_range) & (t <= sensor.max_range)
    noise = truncated_normal(rng, len(t), 3.0) * sensor.noise_sigma if sensor.noise_sigma > 0 else 0.0
    r = (t + noise)[hit]
    pts = d_s[hit] * r[:, None]
    return SensorFrame(pts, pose, float(timestamp))


# trajectories ---------------------------------------------------------------

@dataclass(frozen=True)
class TimedPose:
    time: float
    pose: Pose


def scripted_trajectory(kind, duration: float, rate: float, **params) -> list:
    """Robot base poses sampled at ``rate`` Hz for ``duration`` seconds.

    ``static``: hold ``start``.  ``straight``: constant velocity from ``start``
    toward ``end``.  ``stair_ascent``: straight in x while the base height
    follows a smoothed step profile (``rise``, ``run``, ``x0``, ``steps``).
    """
    n = int(round(duration * rate))
    if n <= 0:
        return []
    start = np.asarray(params.get("start", (0.0, 0.0, 0.4)), dtype=np.float64)
    end = np.asarray(params.get("end", start), dtype=np.float64)
    yaw = float(params.get("yaw", 0.0))
    times = np.arange(n) / rate
    if kind == "static":
        pos = np.repeat(start[None], n, axis=0)
    elif kind in ("straight", "stair_ascent"):
        velocity = (end - start) / duration
        pos = start + times[:, None] * velocity
        if kind == "stair_ascent":
            rise = params.get("rise", 0.17)
            run = params.get("run", 0.29)
            x0 = params.get("x0", 0.5)
            steps = int(params.get("steps", 5))
            pos[:, 2] = start[2] + stair_profile(pos[:, 0], rise, run, x0, steps)
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    rot = rot_z(yaw)
    return [TimedPose(float(t), Pose(rot, p)) for t, p in zip(times, pos)]


def stair_profile(x, rise, run, x0, steps):
    """Smooth, non-decreasing height of a base climbing the stair."""
    x = np.asarray(x, dtype=np.float64)
    z = np.zeros_like(x)
    for k in range(steps):
        s = np.clip((x - (x0 + (k - 0.5) * run)) / run, 0.0, 1.0)
        z += rise * s * s * (3 - 2 * s)
    return z


def distance_to_surfaces(scene: Scene, points) -> np.ndarray:
    """Distance from each point to the nearest primitive surface."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    best = np.full(len(p), np.inf)
    for prim in scene.primitives:
        if isinstance(prim, Box):
            lo, hi = np.asarray(prim.lo), np.asarray(prim.hi)
            outside = np.maximum(np.maximum(lo - p, p - hi), 0.0)
            d_out = np.linalg.norm(outside, axis=1)
            d_in = np.min(np.minimum(p - lo, hi - p), axis=1)
            d = np.where(d_out > 0, d_out, np.maximum(d_in, 0.0))
        else:
            c, u, v = (np.asarray(a, float) for a in (prim.center, prim.u, prim.v))
            rel = p - c
            a = np.clip(rel @ u, -prim.half[0], prim.half[0])
            b = np.clip(rel @ v, -prim.half[1], prim.half[1])
            d = np.linalg.norm(rel - a[:, None] * u - b[:, None] * v, axis=1)
        np.minimum(best, d, out=best)
    return best
