"""Plane-level IoU scoring and per-stage timing."""

from __future__ import annotations

import time
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .polygonize import DegeneratePolygonError, PlanePolygon, monotone_chain, project_to_plane, shoelace

RASTER_CELL = 0.005
MAX_NORMAL_DEG = 20.0
MAX_OFFSET = 0.05
STAGES = ("mapping", "classification", "clustering", "ransac", "hull")


def _truth_frame_polygons(detected: PlanePolygon, truth: PlanePolygon):
    a = project_to_plane(truth.plane, detected.vertices3d)
    b = np.asarray(truth.vertices2d, dtype=np.float64)
    return monotone_chain(a), monotone_chain(b)


def _gate(detected: PlanePolygon, truth: PlanePolygon, max_normal_deg, max_offset) -> bool:
    c = abs(float(np.dot(detected.plane.normal, truth.plane.normal)))
    if c < np.cos(np.radians(max_normal_deg)):
        return False
    centroid = np.mean(np.asarray(detected.vertices3d), axis=0)
    return abs(float(centroid @ truth.plane.normal - truth.plane.offset)) <= max_offset


def _inside(poly, pts):
    """Points inside or on a CCW convex polygon."""
    ok = np.ones(len(pts), bool)
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        ok &= (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0]) >= 0.0
    return ok


def raster_iou(a, b, cell: float = RASTER_CELL) -> float:
    """IoU of two CCW convex polygons from cell-center occupancy on a fixed lattice."""
    lo = np.floor(np.minimum(a.min(0), b.min(0)) / cell).astype(np.int64)
    hi = np.ceil(np.maximum(a.max(0), b.max(0)) / cell).astype(np.int64)
    xs = (np.arange(lo[0], hi[0]) + 0.5) * cell
    ys = (np.arange(lo[1], hi[1]) + 0.5) * cell
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    ia, ib = _inside(a, pts), _inside(b, pts)
    union = np.count_nonzero(ia | ib)
    return float(np.count_nonzero(ia & ib) / union) if union else 0.0


def clip_convex(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman intersection of two CCW convex polygons."""
    out = [tuple(p) for p in subject]
    for a, b in zip(clip, np.roll(clip, -1, axis=0)):
        if not out:
            break
        src, out = out, []

        def side(p):
            return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

        for k in range(len(src)):
            p, q = src[k], src[(k + 1) % len(src)]
            sp, sq = side(p), side(q)
            if sp >= 0:
                out.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return np.asarray(out).reshape(-1, 2)


def exact_iou(a, b) -> float:
    inter = clip_convex(a, b)
    ai = abs(shoelace(inter)) if len(inter) >= 3 else 0.0
    union = abs(shoelace(a)) + abs(shoelace(b)) - ai
    return float(ai / union) if union > 0 else 0.0


def plane_iou(detected: PlanePolygon, truth: PlanePolygon, cell: float = RASTER_CELL,
              exact: bool = False, max_normal_deg: float = MAX_NORMAL_DEG,
              max_offset: float = MAX_OFFSET) -> float:
    """IoU of a detection against a truth region, measured in the truth plane.

    Zero when the normals differ by more than ``max_normal_deg`` or the
    detection's vertex centroid sits farther than ``max_offset`` from the
    truth plane.
    """
    if not _gate(detected, truth, max_normal_deg, max_offset):
        return 0.0
    try:
        a, b = _truth_frame_polygons(detected, truth)
    except DegeneratePolygonError:
        return 0.0
    return exact_iou(a, b) if exact else raster_iou(a, b, cell)


@dataclass
class PlaneMatch:
    detected_id: int
    truth_id: int
    iou: float


@dataclass
class IoUReport:
    matches: list
    mean_iou: float
    area_weighted_iou: float
    n_truth: int
    n_detected: int
    unmatched_truth: list
    unmatched_detected: list

    def as_dict(self) -> "OrderedDict":
        d = OrderedDict()
        d["mean_iou"] = round(self.mean_iou, 6)
        d["area_weighted_iou"] = round(self.area_weighted_iou, 6)
        d["n_truth"] = self.n_truth
        d["n_detected"] = self.n_detected
        d["n_matched"] = len(self.matches)
        d["unmatched_truth"] = " ".join(str(t) for t in self.unmatched_truth) or "-"
        d["unmatched_detected"] = " ".join(str(t) for t in self.unmatched_detected) or "-"
        return d


def match_planes(detected, truth, **iou_kw) -> IoUReport:
    """Greedy one-to-one matching by descending IoU.

    Detections are identified by cluster label and truths by region id, so
    the report does not depend on list order.  Ties go to the lower truth id,
    then the lower detection id.
    """
    det = sorted(detected, key=lambda p: p.cluster_label)
    tru = sorted(truth, key=lambda p: p.cluster_label)
    pairs = []
    for t in tru:
        for d in det:
            v = plane_iou(d, t, **iou_kw)
            if v > 0.0:
                pairs.append((-v, t.cluster_label, d.cluster_label))
    pairs.sort()
    used_t, used_d, matches = set(), set(), []
    for neg, tid, did in pairs:
        if tid in used_t or did in used_d:
            continue
        used_t.add(tid)
        used_d.add(did)
        matches.append(PlaneMatch(did, tid, -neg))
    matches.sort(key=lambda m: m.truth_id)
    by_truth = {m.truth_id: m.iou for m in matches}
    ious = np.array([by_truth.get(t.cluster_label, 0.0) for t in tru])
    areas = np.array([abs(t.area) for t in tru])
    mean = float(ious.mean()) if len(tru) else 0.0
    weighted = float((ious * areas).sum() / areas.sum()) if len(tru) and areas.sum() > 0 else 0.0
    return IoUReport(matches, mean, weighted, len(tru), len(det),
                     [t.cluster_label for t in tru if t.cluster_label not in used_t],
                     [d.cluster_label for d in det if d.cluster_label not in used_d])


# timing ---------------------------------------------------------------------

class StageTimer:
    """Collects monotonic-clock spans per stage, one record per frame."""

    def __init__(self, clock=time.perf_counter):
        self.clock = clock
        self.frames: list = []
        self._current: dict = {}
        self._counts: dict = {}

    @contextmanager
    def stage(self, name):
        t0 = self.clock()
        try:
            yield
        finally:
            self._current[name] = self._current.get(name, 0.0) + (self.clock() - t0)

    def count(self, **counts):
        self._counts.update(counts)

    def end_frame(self):
        self.frames.append((dict(self._current), dict(self._counts)))
        self._current, self._counts = {}, {}


@dataclass
class TimingReport:
    rows: list = field(default_factory=list)      # per frame: OrderedDict of stage ms + counts
    mean_ms: dict = field(default_factory=dict)
    total_ms: float = 0.0

    def __len__(self):
        return len(self.rows)


def timeline(timer: StageTimer, stages=STAGES) -> TimingReport:
    rows = []
    for k, (spans, counts) in enumerate(timer.frames):
        row = OrderedDict(frame=k)
        names = list(stages) + [s for s in spans if s not in stages]
        for s in names:
            row[f"{s}_ms"] = 1e3 * spans.get(s, 0.0)
        row["total_ms"] = 1e3 * sum(spans.values())
        for key in sorted(counts):
            row[key] = counts[key]
        rows.append(row)
    if not rows:
        return TimingReport()
    keys = [k for k in rows[0] if k.endswith("_ms")]
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    return TimingReport(rows, mean, float(sum(r["total_ms"] for r in rows)))


# overlap support ------------------------------------------------------------

def support_coverage(points, region2d, cell: float = 0.02) -> float:
    """Fraction of lattice cells inside an (x, y) region holding at least one point."""
    region = monotone_chain(region2d)
    lo = np.floor(region.min(0) / cell).astype(np.int64)
    hi = np.ceil(region.max(0) / cell).astype(np.int64)
    xs = (np.arange(lo[0], hi[0]) + 0.5) * cell
    ys = (np.arange(lo[1], hi[1]) + 0.5) * cell
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    centers = np.column_stack([X.ravel(), Y.ravel()])
    inside = _inside(region, centers)
    if not inside.any():
        return 0.0
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)[:, :2]
    occ = set(map(tuple, np.floor(pts / cell).astype(np.int64)))
    keys = np.floor(centers[inside] / cell).astype(np.int64)
    return float(np.mean([tuple(k) in occ for k in keys]))


def planes_over_region(polygons, region2d, min_coverage: float = 0.5, cell: float = 0.02) -> int:
    """How many planes have inlier support covering ``region2d`` in (x, y)."""
    return sum(1 for p in polygons
               if p.inliers is not None and support_coverage(p.inliers, region2d, cell) >= min_coverage)
