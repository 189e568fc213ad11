"""Frame-by-frame orchestration: map, segment, fit, polygonize, score."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from . import config as C
from .frames import SensorFrame, load_frames
from .heightmap import HeightMap, HeightMapParams, hm_integrate, hm_segment
from .metrics import IoUReport, StageTimer, TimingReport, match_planes, timeline
from .plane_fit import fit_planes, refine_plane
from .polygonize import PlanePolygon, polygonize_all
from .report import read_polygons, write_iou_report, write_polygons, write_timing_csv
from .scene_sim import Scene, build_scene, render_frame, scripted_trajectory, sensor_pose
from .segmentation import (build_adjacency, classify_steppable, estimate_normals,
                           label_components)
from .voxel_map import VoxelGrid, clear_rays, integrate_frame, recenter

log = logging.getLogger(__name__)


@dataclass
class FrameResult:
    index: int
    timestamp: float
    polygons: list
    n_points: int = 0
    n_clusters: int = 0


@dataclass
class RunResult:
    frames: int
    polygons: list                      # from the last frame
    truth: list = field(default_factory=list)
    report: IoUReport | None = None
    timing: TimingReport = field(default_factory=TimingReport)
    out_dir: Path | None = None
    state: object = None                # final VoxelGrid or HeightMap


def set_threads(n: int | None) -> None:
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def steppable_truth(truth, max_slope_deg: float, up=(0.0, 0.0, 1.0)) -> list:
    """Truth regions a foothold planner cares about: near-horizontal ones."""
    c = np.cos(np.radians(max_slope_deg))
    up = np.asarray(up, dtype=np.float64)
    return [t for t in truth if abs(float(t.plane.normal @ up)) >= c]


class VoxelPipeline:
    """Dense voxel map around the sensor, refreshed and segmented every frame."""

    def __init__(self, cfg: dict, faithful: bool | None = None):
        self.cfg = cfg
        self.seg = C.seg_params(cfg)
        self.ransac = C.ransac_params(cfg)
        self.refine = bool(cfg["polygon"]["refine"]) and not (cfg["faithful"] if faithful is None else faithful)
        self.min_area = float(cfg["polygon"]["min_area"])
        self.offset = np.asarray(cfg["grid"]["center_offset"], dtype=np.float64)
        self.grid: VoxelGrid | None = None
        self.timer = StageTimer()
        self.frame_count = 0

    @property
    def state(self):
        return self.grid

    def _center(self, frame: SensorFrame):
        return frame.pose.translation + self.offset

    def process(self, frame: SensorFrame) -> FrameResult:
        frame.pose.validate()
        t = self.timer
        g = self.cfg["grid"]
        with t.stage("mapping"):
            if self.grid is None:
                self.grid = VoxelGrid(g["resolution"], tuple(g["extent"]), self._center(frame))
            else:
                recenter(self.grid, self._center(frame))
            clear_rays(self.grid, frame)
            integrate_frame(self.grid, frame)
        with t.stage("classification"):
            est = estimate_normals(self.grid, self.seg)
            cls = classify_steppable(est, self.seg, self.grid)
            step = est.subset(cls.steppable)
        with t.stage("clustering"):
            adj = build_adjacency(step, self.seg, self.grid.resolution)
            clusters = label_components(adj, step).filtered(self.seg.min_cluster_size)
        with t.stage("ransac"):
            fits = fit_planes(clusters, self.ransac)
            planes = None
            if self.refine:
                planes = [refine_plane(f.inliers, f.plane, self.seg.up) for f in fits]
        with t.stage("hull"):
            polys, _ = polygonize_all(fits, self.min_area, planes)
        t.count(points=len(frame), occupied=len(est), steppable=len(step),
                clusters=len(clusters), planes=len(polys))
        t.end_frame()
        k = self.frame_count
        self.frame_count += 1
        return FrameResult(k, frame.timestamp, polys, len(frame), len(clusters))


class HeightMapPipeline:
    """2.5-D baseline with the same per-frame interface."""

    def __init__(self, cfg: dict, faithful: bool | None = None):
        self.cfg = cfg
        self.params = HeightMapParams(C.seg_params(cfg), C.ransac_params(cfg),
                                      float(cfg["polygon"]["min_area"]))
        self.offset = np.asarray(cfg["grid"]["center_offset"], dtype=np.float64)[:2]
        self.hm: HeightMap | None = None
        self.timer = StageTimer()
        self.frame_count = 0

    @property
    def state(self):
        return self.hm

    def process(self, frame: SensorFrame) -> FrameResult:
        frame.pose.validate()
        h = self.cfg["heightmap"]
        center = frame.pose.translation[:2] + self.offset
        with self.timer.stage("mapping"):
            if self.hm is None:
                self.hm = HeightMap(h["resolution"], tuple(h["extent"]), center)
            else:
                self.hm.recenter(center)
            hm_integrate(self.hm, frame)
        with self.timer.stage("segmentation"):
            polys, _ = hm_segment(self.hm, self.params)
        self.timer.count(points=len(frame), cells=int(self.hm.valid.sum()), planes=len(polys))
        self.timer.end_frame()
        k = self.frame_count
        self.frame_count += 1
        return FrameResult(k, frame.timestamp, polys, len(frame))


def make_pipeline(cfg, baseline: bool = False, faithful: bool | None = None):
    cls = HeightMapPipeline if (baseline or cfg["mode"] == "heightmap") else VoxelPipeline
    return cls(cfg, faithful)


# frame sources --------------------------------------------------------------

def build_config_scene(cfg) -> Scene:
    s = cfg["scene"]
    return build_scene(s["kind"], **(s.get("params") or {}))


def simulate(cfg):
    """``(scene, frames, truth)``: a rendered frame stream and the truth at its end.

    ``scene.remove`` (``{name, at_frame}``) drops a primitive mid-stream.
    """
    scene = build_config_scene(cfg)
    sensor = C.sensor_spec(cfg)
    tr = dict(cfg["trajectory"])
    n, rate = int(tr.pop("frames")), float(tr.pop("rate"))
    kind = tr.pop("kind")
    poses = scripted_trajectory(kind, n / rate, rate, **tr) if n else []
    removal = cfg["scene"].get("remove") or None
    seed = int(cfg["seed"])
    frames, current = [], scene
    for k, tp in enumerate(poses):
        if removal and k == int(removal["at_frame"]):
            current = scene.without(removal["name"])
        rng = np.random.default_rng([seed, k])
        frames.append(render_frame(current, sensor, sensor_pose(sensor, tp.pose), rng, tp.time))
    return current, frames, current.ground_truth


# runs -----------------------------------------------------------------------

def _prepare_out(out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_test"
    probe.write_text("")
    probe.unlink()
    return out


def process_frames(cfg, frames, truth=None, out_dir=None, baseline: bool = False,
                   faithful: bool | None = None, figures: bool | None = None) -> RunResult:
    """Run ``frames`` through the pipeline and write artifacts to ``out_dir``."""
    pipe = make_pipeline(cfg, baseline, faithful)
    out = _prepare_out(out_dir) if out_dir is not None else None
    per_frame = bool(cfg["output"]["per_frame"]) and out is not None
    if per_frame:
        (out / "polygons").mkdir(exist_ok=True)
    polys = []
    for frame in frames:
        res = pipe.process(frame)
        polys = res.polygons
        if per_frame:
            write_polygons(out / "polygons" / f"frame_{res.index:05d}.json", polys,
                           frame=res.index, timestamp=round(res.timestamp, 9))
    timing = timeline(pipe.timer, stages=list(pipe.timer.frames[0][0]) if pipe.timer.frames else ())
    scored = steppable_truth(truth or [], C.seg_params(cfg).max_slope_deg)
    report = match_planes(polys, scored) if truth is not None else None
    result = RunResult(pipe.frame_count, polys, scored, report, timing, out, pipe.state)
    if out is not None:
        write_outputs(cfg, result, baseline or cfg["mode"] == "heightmap",
                      figures if figures is not None else bool(cfg["output"]["figures"]))
    return result


def write_outputs(cfg, result: RunResult, baseline: bool, figures: bool) -> None:
    out = result.out_dir
    write_polygons(out / "polygons.json", result.polygons, frames=result.frames)
    C.dump_config(cfg, out / "config.yaml")
    write_timing_csv(out / "timing.csv", result.timing)
    summary = {"mode": "heightmap" if baseline else "voxel", "frames": result.frames,
               "n_polygons": len(result.polygons)}
    if result.report is not None:
        write_iou_report(out / "report.txt", result.report, summary)
        write_polygons(out / "ground_truth_scored.json", result.truth)
    if figures:
        from . import plotting
        plotting.polygon_figure(result.polygons, result.truth, out / "figures" / "polygons.png")
        if result.timing.rows:
            plotting.timing_figure(result.timing, out / "figures" / "timing.png")


def run_pipeline(cfg, out_dir=None, baseline: bool = False, faithful: bool | None = None,
                 figures: bool | None = None) -> RunResult:
    """Simulate the configured scene and process it end to end."""
    _, frames, truth = simulate(cfg)
    return process_frames(cfg, frames, truth, out_dir or cfg["output"]["dir"], baseline,
                          faithful, figures)


def replay(frames_path, cfg, out_dir=None, truth_path=None, baseline: bool = False,
           faithful: bool | None = None, figures: bool | None = None) -> RunResult:
    """Process a recorded frame file; truth comes from ``truth_path`` or a
    ``ground_truth.json`` next to the frames, if present."""
    frames_path = Path(frames_path)
    frames = load_frames(frames_path)
    if truth_path is None and (frames_path.parent / "ground_truth.json").exists():
        truth_path = frames_path.parent / "ground_truth.json"
    truth = read_polygons(truth_path) if truth_path is not None else None
    return process_frames(cfg, frames, truth, out_dir or cfg["output"]["dir"], baseline,
                          faithful, figures)


def score_files(detected_path, truth_path, max_slope_deg: float | None = None) -> IoUReport:
    det = read_polygons(detected_path)
    truth = read_polygons(truth_path)
    if max_slope_deg is not None:
        truth = steppable_truth(truth, max_slope_deg)
    return match_planes(det, truth)


def write_simulation(cfg, out_dir) -> tuple[Path, Path]:
    """Render the configured stream to ``frames.vxf`` plus ``ground_truth.json``."""
    from .frames import write_frames
    out = _prepare_out(out_dir)
    _, frames, truth = simulate(cfg)
    fp, tp = out / "frames.vxf", out / "ground_truth.json"
    write_frames(fp, frames)
    write_polygons(tp, truth, kind="ground_truth")
    C.dump_config(cfg, out / "config.yaml")
    return fp, tp


__all__ = ["FrameResult", "HeightMapPipeline", "PlanePolygon", "RunResult", "VoxelPipeline",
           "make_pipeline", "process_frames", "replay", "run_pipeline", "score_files",
           "simulate", "steppable_truth", "write_simulation"]
