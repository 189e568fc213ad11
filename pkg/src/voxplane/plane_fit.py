"""Cluster-parallel RANSAC plane fitting.

All clusters are packed into one point buffer with per-cluster offsets.  The
three RANSAC stages run as kernels over (cluster, iteration) pairs, so many
clusters share one launch.  Every (cluster, iteration) pair draws its sample
from a counter-based hash of ``(seed, label, iteration)``; the candidates are
therefore identical whether clusters are processed together or one by one,
and for any thread count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .eigen import jacobi_eigh3

log = logging.getLogger(__name__)

MIN_SAMPLE_AREA = 1e-10
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@dataclass
class RansacParams:
    iterations: int = 100
    inlier_eps: float = 0.01
    seed: int = 0
    up: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_eps <= 0:
            raise ValueError("inlier_eps must be positive")


@dataclass(frozen=True)
class PlaneModel:
    normal: np.ndarray
    offset: float
    inlier_count: int = 0
    cluster_label: int = -1

    def distance(self, points) -> np.ndarray:
        return np.asarray(points) @ self.normal - self.offset


@dataclass
class FitResult:
    plane: PlaneModel
    inliers: np.ndarray        # (k, 3) inlier points
    inlier_ids: np.ndarray     # positions within the cluster's point list
    iteration: int             # winning RANSAC iteration


class FitList(list):
    """Fit results in ascending label order, plus what was left out."""

    def __init__(self, items=(), skipped_small=(), unfit=()):
        super().__init__(items)
        self.skipped_small = list(skipped_small)
        self.unfit = list(unfit)


# random stream ---------------------------------------------------------------

@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, label, iteration):
    h = _mix64(np.uint64(seed) + _GOLDEN)
    h = _mix64(h ^ (np.uint64(label) + _GOLDEN * np.uint64(2)))
    return _mix64(h ^ (np.uint64(iteration) + _GOLDEN * np.uint64(3)))


@njit(cache=True)
def _draw(key, k, bound):
    return np.int64(_mix64(key + np.uint64(k + 1) * _GOLDEN) % np.uint64(bound))


@njit(cache=True)
def sample_triple(key, m):
    """Three distinct indices in [0, m) from one stream key."""
    i0 = _draw(key, 0, m)
    i1 = _draw(key, 1, m - 1)
    if i1 >= i0:
        i1 += 1
    lo = min(i0, i1)
    hi = max(i0, i1)
    i2 = _draw(key, 2, m - 2)
    if i2 >= lo:
        i2 += 1
    if i2 >= hi:
        i2 += 1
    return i0, i1, i2


# kernels --------------------------------------------------------------------

@njit(cache=True)
def _orient(n, up):
    d = n[0] * up[0] + n[1] * up[1] + n[2] * up[2]
    if d < -1e-12:
        n[0] = -n[0]
        n[1] = -n[1]
        n[2] = -n[2]
    elif d <= 1e-12:
        a = 0
        if abs(n[1]) > abs(n[a]):
            a = 1
        if abs(n[2]) > abs(n[a]):
            a = 2
        if n[a] < 0:
            n[0] = -n[0]
            n[1] = -n[1]
            n[2] = -n[2]


@njit(parallel=True, cache=True)
def _candidates(points, offsets, labels, seed, iters, up, planes, ok):
    """One 3-point hypothesis per (cluster, iteration)."""
    k_clusters = offsets.shape[0] - 1
    for t in prange(k_clusters * iters):
        c = t // iters
        it = t - c * iters
        base = offsets[c]
        m = offsets[c + 1] - base
        ok[c, it] = False
        if m < 3:
            continue
        key = stream_key(seed, labels[c], it)
        i0, i1, i2 = sample_triple(key, m)
        p0 = points[base + i0]
        p1 = points[base + i1]
        p2 = points[base + i2]
        ux = p1[0] - p0[0]
        uy = p1[1] - p0[1]
        uz = p1[2] - p0[2]
        vx = p2[0] - p0[0]
        vy = p2[1] - p0[1]
        vz = p2[2] - p0[2]
        n = np.empty(3)
        n[0] = uy * vz - uz * vy
        n[1] = uz * vx - ux * vz
        n[2] = ux * vy - uy * vx
        nn = np.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
        if 0.5 * nn <= MIN_SAMPLE_AREA:
            continue
        n /= nn
        _orient(n, up)
        planes[c, it, 0] = n[0]
        planes[c, it, 1] = n[1]
        planes[c, it, 2] = n[2]
        planes[c, it, 3] = n[0] * p0[0] + n[1] * p0[1] + n[2] * p0[2]
        ok[c, it] = True


@njit(parallel=True, cache=True)
def _count_inliers(points, offsets, iters, planes, ok, eps, counts):
    """Inlier count per hypothesis, |n.x - d| <= eps."""
    k_clusters = offsets.shape[0] - 1
    for t in prange(k_clusters * iters):
        c = t // iters
        it = t - c * iters
        if not ok[c, it]:
            counts[c, it] = -1
            continue
        nx = planes[c, it, 0]
        ny = planes[c, it, 1]
        nz = planes[c, it, 2]
        d = planes[c, it, 3]
        cnt = 0
        for p in range(offsets[c], offsets[c + 1]):
            r = nx * points[p, 0] + ny * points[p, 1] + nz * points[p, 2] - d
            if abs(r) <= eps:
                cnt += 1
        counts[c, it] = cnt


@njit(parallel=True, cache=True)
def _select_and_extract(points, offsets, planes, counts, eps, best, mask):
    """Per-cluster argmax (lowest iteration on ties) and inlier mask."""
    k_clusters = offsets.shape[0] - 1
    iters = counts.shape[1]
    for c in prange(k_clusters):
        b = -1
        bc = -1
        for it in range(iters):
            if counts[c, it] > bc:
                bc = counts[c, it]
                b = it
        if bc < 0:
            b = -1
        best[c] = b
        if b < 0:
            continue
        nx = planes[c, b, 0]
        ny = planes[c, b, 1]
        nz = planes[c, b, 2]
        d = planes[c, b, 3]
        for p in range(offsets[c], offsets[c + 1]):
            r = nx * points[p, 0] + ny * points[p, 1] + nz * points[p, 2] - d
            mask[p] = abs(r) <= eps


def _run_packed(points, offsets, labels, params, planes, ok, counts, best, mask):
    iters = int(params.iterations)
    up = np.asarray(params.up, dtype=np.float64)
    seed = np.uint64(int(params.seed) & 0xFFFFFFFFFFFFFFFF)
    _candidates(points, offsets, labels, seed, iters, up, planes, ok)
    _count_inliers(points, offsets, iters, planes, ok, float(params.inlier_eps), counts)
    _select_and_extract(points, offsets, planes, counts, float(params.inlier_eps), best, mask)


@dataclass
class PackedClusters:
    """All cluster points in one buffer; cluster ``c`` is ``points[offsets[c]:offsets[c+1]]``."""

    points: np.ndarray
    offsets: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    def cluster(self, c) -> np.ndarray:
        return self.points[self.offsets[c]:self.offsets[c + 1]]


def _cluster_points(clusters):
    """Normalize ClusterSet / mapping / sequence input to ``[(label, points)]``."""
    if hasattr(clusters, "clusters") and hasattr(clusters, "points"):
        return [(int(lab), clusters.points(lab)) for lab in sorted(clusters.clusters)]
    if isinstance(clusters, dict):
        items = sorted(clusters.items())
    else:
        items = list(enumerate(clusters))
    return [(int(lab), np.asarray(p, dtype=np.float64).reshape(-1, 3)) for lab, p in items]


def pack_clusters(clusters) -> PackedClusters:
    if isinstance(clusters, PackedClusters):
        return clusters
    items = _cluster_points(clusters)
    labels = np.array([lab for lab, _ in items], dtype=np.int64)
    sizes = np.array([len(p) for _, p in items], dtype=np.int64)
    offsets = np.zeros(len(items) + 1, np.int64)
    np.cumsum(sizes, out=offsets[1:])
    points = np.concatenate([p for _, p in items]) if items else np.zeros((0, 3))
    return PackedClusters(np.ascontiguousarray(points, dtype=np.float64), offsets, labels)


def fit_planes(clusters, params: RansacParams | None = None, cluster_parallel: bool = True) -> FitList:
    """One RANSAC plane per cluster.

    ``cluster_parallel=False`` launches the kernels once per cluster (each
    launch still parallel over iterations and points) instead of once for
    all clusters.  Results are identical either way.
    """
    params = params or RansacParams()
    packed = pack_clusters(clusters)
    sizes = np.diff(packed.offsets)
    small = [int(lab) for lab, m in zip(packed.labels, sizes) if m < 3]
    if small:
        log.warning("skipped %d clusters with fewer than 3 points", len(small))
    k = len(packed)
    iters = int(params.iterations)
    planes = np.zeros((k, iters, 4))
    ok = np.zeros((k, iters), np.bool_)
    counts = np.zeros((k, iters), np.int64)
    best = np.full(k, -1, np.int64)
    mask = np.zeros(len(packed.points), np.bool_)
    if k == 0:
        return FitList([], small, [])

    if cluster_parallel:
        _run_packed(packed.points, packed.offsets, packed.labels, params,
                    planes, ok, counts, best, mask)
    else:
        for c in range(k):
            lo, hi = packed.offsets[c], packed.offsets[c + 1]
            _run_packed(packed.points[lo:hi], np.array([0, hi - lo], np.int64),
                        packed.labels[c:c + 1], params, planes[c:c + 1], ok[c:c + 1],
                        counts[c:c + 1], best[c:c + 1], mask[lo:hi])

    results, unfit = [], []
    for c in range(k):
        lab = int(packed.labels[c])
        if sizes[c] < 3:
            continue
        b = int(best[c])
        if b < 0:
            unfit.append(lab)
            continue
        lo, hi = packed.offsets[c], packed.offsets[c + 1]
        ids = np.flatnonzero(mask[lo:hi])
        model = PlaneModel(planes[c, b, :3].copy(), float(planes[c, b, 3]), int(counts[c, b]), lab)
        results.append(FitResult(model, packed.points[lo:hi][ids], ids, b))
    if unfit:
        log.warning("%d clusters had only degenerate samples", len(unfit))
    return FitList(results, small, unfit)


def refine_plane(inliers, fallback: PlaneModel | None = None, up=(0.0, 0.0, 1.0)) -> PlaneModel:
    """Total-least-squares plane through ``inliers``.

    Rank-deficient input keeps ``fallback``; without one it raises.
    """
    pts = np.asarray(inliers, dtype=np.float64).reshape(-1, 3)
    label = fallback.cluster_label if fallback is not None else -1
    if len(pts) >= 3:
        c = pts.mean(axis=0)
        d = pts - c
        cov = d.T @ d / len(pts)
        w, v = jacobi_eigh3(cov)
        if w[2] > 0 and w[1] > 1e-9 * w[2]:
            n = v[:, 0] / np.linalg.norm(v[:, 0])
            _orient(n, np.asarray(up, dtype=np.float64))
            return PlaneModel(n, float(n @ c), len(pts), label)
    if fallback is None:
        raise ValueError("inliers are rank-deficient and no fallback plane was given")
    return fallback
