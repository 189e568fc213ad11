"""Steppability classification and vertex-based clustering of voxels.

Normals come from the covariance of the voxel means in a small window around
each occupied voxel.  Steppable voxels are then linked when their means are
close and their normals agree, and connected components are found by
iterative min-label propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .eigen import jacobi_eigh3
from .voxel_map import VoxelGrid, VoxelStatus, occupied_arrays, set_status

DEGENERATE_RATIO = 1e-9


@dataclass
class SegmentationParams:
    neighbor_radius: int = 1          # voxels; 1 -> 3x3x3 window
    min_neighbors: int = 3            # occupied neighbors needed for a normal
    max_slope_deg: float = 15.0       # steepest steppable normal, vs. up
    cluster_distance: float = 0.05    # max mean-to-mean link length, meters
    cluster_angle_deg: float = 15.0   # normal-vs-normal threshold for adjacency
    min_cluster_size: int = 30
    up: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if self.neighbor_radius < 1 or self.min_neighbors < 1:
            raise ValueError("neighbor_radius and min_neighbors must be positive")
        if self.max_slope_deg <= 0 or self.cluster_angle_deg <= 0 or self.cluster_distance <= 0:
            raise ValueError("thresholds must be positive")
        up = np.asarray(self.up, dtype=np.float64)
        self.up = tuple(up / np.linalg.norm(up))


@dataclass(frozen=True)
class SurfaceEstimate:
    index: tuple
    mean: np.ndarray
    normal: np.ndarray | None
    neighbor_count: int
    angle_to_up: float
    valid: bool


@dataclass
class SurfaceEstimates:
    """Per-voxel normal estimates, stored column-wise."""

    indices: np.ndarray          # (n, 3) window indices
    means: np.ndarray            # (n, 3)
    normals: np.ndarray          # (n, 3), NaN where unset
    neighbor_count: np.ndarray   # (n,)
    angle_to_up: np.ndarray      # (n,) degrees, NaN where unset
    valid: np.ndarray            # (n,) bool

    def __len__(self):
        return len(self.valid)

    def __getitem__(self, k) -> SurfaceEstimate:
        ok = bool(self.valid[k])
        return SurfaceEstimate(tuple(int(v) for v in self.indices[k]), self.means[k],
                               self.normals[k] if ok else None, int(self.neighbor_count[k]),
                               float(self.angle_to_up[k]), ok)

    def subset(self, mask) -> "SurfaceEstimates":
        return SurfaceEstimates(self.indices[mask], self.means[mask], self.normals[mask],
                                self.neighbor_count[mask], self.angle_to_up[mask], self.valid[mask])

    @classmethod
    def from_arrays(cls, means, normals, neighbor_count=None, indices=None, up=(0, 0, 1)):
        """Build estimates from raw means/normals (for tests and replays)."""
        means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        n = len(means)
        if indices is None:
            indices = np.zeros((n, 3), np.int64)
        if neighbor_count is None:
            neighbor_count = np.full(n, 27, np.int64)
        dots = np.clip(normals @ np.asarray(up, dtype=np.float64), -1.0, 1.0)
        return cls(np.asarray(indices, np.int64), means, normals,
                   np.asarray(neighbor_count, np.int64), np.degrees(np.arccos(dots)),
                   np.ones(n, bool))


@dataclass
class Classification:
    steppable: np.ndarray   # bool mask over the estimates

    @property
    def step_ids(self) -> np.ndarray:
        return np.flatnonzero(self.steppable)

    @property
    def object_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.steppable)


@dataclass
class Adjacency:
    """Symmetric adjacency in CSR form over steppable-voxel ids."""

    indptr: np.ndarray
    neighbors: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.neighbors) // 2

    def neighbors_of(self, i) -> np.ndarray:
        return self.neighbors[self.indptr[i]:self.indptr[i + 1]]

    @classmethod
    def from_edges(cls, n, edges) -> "Adjacency":
        """Symmetric CSR from an undirected edge list (self-loops dropped)."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        e = e[e[:, 0] != e[:, 1]]
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        keep = np.ones(len(src), bool)
        keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst = src[keep], dst[keep]
        indptr = np.zeros(n + 1, np.int64)
        np.add.at(indptr, src + 1, 1)
        return cls(np.cumsum(indptr), dst)

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n_vertices), np.diff(self.indptr))
        e = np.stack([src, self.neighbors], axis=1)
        return e[e[:, 0] < e[:, 1]]


@dataclass
class ClusterSet:
    labels: np.ndarray                 # (n,) canonical-min label per steppable voxel
    means: np.ndarray                  # (n, 3)
    normals: np.ndarray                # (n, 3)
    indices: np.ndarray                # (n, 3) window indices
    passes: int = 0
    clusters: dict = field(default_factory=dict)   # label -> member ids

    def __post_init__(self):
        if not self.clusters and len(self.labels):
            order = np.argsort(self.labels, kind="stable")
            uniq, start = np.unique(self.labels[order], return_index=True)
            bounds = list(start[1:]) + [len(order)]
            self.clusters = {int(u): order[s:e] for u, s, e in zip(uniq, start, bounds)}

    def __len__(self):
        return len(self.clusters)

    def points(self, label) -> np.ndarray:
        return self.means[self.clusters[label]]

    def sizes(self) -> dict:
        return {k: len(v) for k, v in self.clusters.items()}

    def filtered(self, min_size: int) -> "ClusterSet":
        keep = {k: v for k, v in self.clusters.items() if len(v) >= min_size}
        return ClusterSet(self.labels, self.means, self.normals, self.indices, self.passes, keep)


# kernels --------------------------------------------------------------------

def _bbox_lookup(indices, margin):
    lo = indices.min(axis=0) - margin
    hi = indices.max(axis=0) + margin + 1
    lut = np.full(tuple(hi - lo), -1, dtype=np.int32)
    rel = indices - lo
    lut[rel[:, 0], rel[:, 1], rel[:, 2]] = np.arange(len(indices), dtype=np.int32)
    return lut, rel


@njit(parallel=True, cache=True)
def _normals_kernel(rel, means, lut, radius, up, min_pts):
    n = rel.shape[0]
    normals = np.full((n, 3), np.nan)
    counts = np.zeros(n, np.int64)
    angles = np.full(n, np.nan)
    valid = np.zeros(n, np.bool_)
    sx, sy, sz = lut.shape
    for i in prange(n):
        cx = rel[i, 0]
        cy = rel[i, 1]
        cz = rel[i, 2]
        s1 = np.zeros(3)
        s2 = np.zeros((3, 3))
        cnt = 0
        for dx in range(-radius, radius + 1):
            x = cx + dx
            if x < 0 or x >= sx:
                continue
            for dy in range(-radius, radius + 1):
                y = cy + dy
                if y < 0 or y >= sy:
                    continue
                for dz in range(-radius, radius + 1):
                    z = cz + dz
                    if z < 0 or z >= sz:
                        continue
                    j = lut[x, y, z]
                    if j < 0:
                        continue
                    d0 = means[j, 0] - means[i, 0]
                    d1 = means[j, 1] - means[i, 1]
                    d2 = means[j, 2] - means[i, 2]
                    s1[0] += d0
                    s1[1] += d1
                    s1[2] += d2
                    s2[0, 0] += d0 * d0
                    s2[0, 1] += d0 * d1
                    s2[0, 2] += d0 * d2
                    s2[1, 1] += d1 * d1
                    s2[1, 2] += d1 * d2
                    s2[2, 2] += d2 * d2
                    cnt += 1
        counts[i] = cnt
        if cnt < min_pts:
            continue
        cov = np.empty((3, 3))
        for a in range(3):
            for b in range(a, 3):
                c = s2[a, b] / cnt - (s1[a] / cnt) * (s1[b] / cnt)
                cov[a, b] = c
                cov[b, a] = c
        w, v = jacobi_eigh3(cov)
        if w[2] <= 0.0 or w[1] <= DEGENERATE_RATIO * w[2]:
            continue
        nx = v[0, 0]
        ny = v[1, 0]
        nz = v[2, 0]
        nn = np.sqrt(nx * nx + ny * ny + nz * nz)
        nx /= nn
        ny /= nn
        nz /= nn
        dot = nx * up[0] + ny * up[1] + nz * up[2]
        if dot < 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
            dot = -dot
        if dot > 1.0:
            dot = 1.0
        normals[i, 0] = nx
        normals[i, 1] = ny
        normals[i, 2] = nz
        angles[i] = np.degrees(np.arccos(dot))
        valid[i] = True
    return normals, counts, angles, valid


def window_zlimits(w: int, resolution: float, max_dist: float) -> np.ndarray:
    """Largest useful ``|dz|`` per ``(dx, dy)`` cell offset (-1: skip the column).

    Means lie inside their voxels, so an offset of ``d`` cells on an axis
    separates them by at least ``(|d| - 1) * resolution`` there.
    """
    r = np.arange(-w, w + 1)
    gap = np.maximum(np.abs(r) - 1, 0) * resolution
    g2 = gap[:, None] ** 2 + gap[None, :] ** 2
    lim = np.full((2 * w + 1, 2 * w + 1), -1, np.int64)
    for dz in range(w + 1):
        gz = max(dz - 1, 0) * resolution
        lim[g2 + gz * gz < max_dist * max_dist] = dz
    return lim


@njit(cache=True)
def _adjacency_pass(rel, means, normals, lut, w, zlim, d2_max, cos_min, indptr, out, fill):
    n = rel.shape[0]
    sx, sy, sz = lut.shape
    total = 0
    for i in range(n):
        cx = rel[i, 0]
        cy = rel[i, 1]
        cz = rel[i, 2]
        k = 0
        for dx in range(-w, w + 1):
            x = cx + dx
            if x < 0 or x >= sx:
                continue
            for dy in range(-w, w + 1):
                y = cy + dy
                r = zlim[dx + w, dy + w]
                if y < 0 or y >= sy or r < 0:
                    continue
                for z in range(max(cz - r, 0), min(cz + r + 1, sz)):
                    j = lut[x, y, z]
                    if j < 0 or j == i:
                        continue
                    e0 = means[i, 0] - means[j, 0]
                    e1 = means[i, 1] - means[j, 1]
                    e2 = means[i, 2] - means[j, 2]
                    if e0 * e0 + e1 * e1 + e2 * e2 >= d2_max:
                        continue
                    c = (normals[i, 0] * normals[j, 0] + normals[i, 1] * normals[j, 1]
                         + normals[i, 2] * normals[j, 2])
                    if c <= cos_min:
                        continue
                    if fill:
                        out[indptr[i] + k] = j
                    k += 1
        if not fill:
            indptr[i + 1] = k
        total += k
    return total


@njit(cache=True)
def _propagate_labels(indptr, nbrs, order, block):
    n = indptr.shape[0] - 1
    labels = np.arange(n, dtype=np.int64)
    passes = 0
    m_g = True
    while m_g:
        m_g = False
        for b0 in range(0, n, block):
            m_b = False
            for k in range(b0, min(b0 + block, n)):
                i = order[k]
                m_l = False
                for e in range(indptr[i], indptr[i + 1]):
                    j = nbrs[e]
                    if labels[i] > labels[j]:
                        labels[i] = labels[j]
                        m_l = True
                    elif labels[i] < labels[j]:
                        labels[j] = labels[i]
                        m_l = True
                if m_l:
                    m_b = True
            if m_b:
                m_g = True
        passes += 1
    return labels, passes


# operations -----------------------------------------------------------------

def estimate_normals(grid: VoxelGrid, params: SegmentationParams | None = None) -> SurfaceEstimates:
    """Local plane normal per occupied voxel from its windowed neighbor means."""
    params = params or SegmentationParams()
    occ = occupied_arrays(grid)
    if len(occ) == 0:
        empty = np.zeros((0, 3))
        return SurfaceEstimates(np.zeros((0, 3), np.int64), empty, empty.copy(),
                                np.zeros(0, np.int64), np.zeros(0), np.zeros(0, bool))
    return estimate_normals_from(occ.indices, occ.means, params)


def estimate_normals_from(indices, means, params: SegmentationParams) -> SurfaceEstimates:
    indices = np.asarray(indices, dtype=np.int64)
    means = np.ascontiguousarray(means, dtype=np.float64)
    r = int(params.neighbor_radius)
    lut, rel = _bbox_lookup(indices, r)
    normals, counts, angles, valid = _normals_kernel(
        rel, means, lut, r, np.asarray(params.up, dtype=np.float64), 3)
    return SurfaceEstimates(indices, means, normals, counts, angles, valid)


def classify_steppable(estimates: SurfaceEstimates, params: SegmentationParams | None = None,
                       grid: VoxelGrid | None = None) -> Classification:
    """Steppable iff enough neighbors and a near-vertical normal (both inclusive)."""
    params = params or SegmentationParams()
    with np.errstate(invalid="ignore"):
        step = (estimates.valid
                & (estimates.neighbor_count >= params.min_neighbors)
                & (estimates.angle_to_up <= params.max_slope_deg))
    if grid is not None and len(estimates):
        set_status(grid, estimates.indices[step], VoxelStatus.STEPPABLE)
        set_status(grid, estimates.indices[~step], VoxelStatus.OCCUPIED)
    return Classification(step)


def adjacency_window(params: SegmentationParams, resolution: float) -> int:
    return max(1, int(math.ceil(params.cluster_distance / resolution - 1e-9)))


def build_adjacency(steppable: SurfaceEstimates, params: SegmentationParams | None = None,
                    resolution: float = 0.01) -> Adjacency:
    """Link steppable voxels with close means and agreeing normals."""
    params = params or SegmentationParams()
    n = len(steppable)
    if n == 0:
        return Adjacency(np.zeros(1, np.int64), np.zeros(0, np.int64))
    w = adjacency_window(params, resolution)
    lut, rel = _bbox_lookup(np.asarray(steppable.indices, np.int64), w)
    means = np.ascontiguousarray(steppable.means, dtype=np.float64)
    normals = np.ascontiguousarray(steppable.normals, dtype=np.float64)
    d2 = params.cluster_distance ** 2
    cos_min = math.cos(math.radians(params.cluster_angle_deg))
    zlim = window_zlimits(w, resolution, params.cluster_distance)
    indptr = np.zeros(n + 1, np.int64)
    _adjacency_pass(rel, means, normals, lut, w, zlim, d2, cos_min, indptr, np.zeros(0, np.int64), False)
    indptr = np.cumsum(indptr)
    out = np.empty(indptr[-1], np.int64)
    _adjacency_pass(rel, means, normals, lut, w, zlim, d2, cos_min, indptr, out, True)
    return Adjacency(indptr, out)


def propagate_labels(adjacency: Adjacency, order=None, block: int = 256):
    """Min-label propagation to a fixed point; returns ``(labels, passes)``.

    ``order`` permutes the vertex visiting schedule.  The fixed point is the
    same for every schedule.
    """
    n = adjacency.n_vertices
    order = np.arange(n, dtype=np.int64) if order is None else np.asarray(order, np.int64)
    return _propagate_labels(adjacency.indptr, adjacency.neighbors, order, int(block))


def label_components(adjacency: Adjacency, steppable: SurfaceEstimates | None = None,
                     order=None) -> ClusterSet:
    labels, passes = propagate_labels(adjacency, order)
    n = adjacency.n_vertices
    if steppable is None:
        z = np.zeros((n, 3))
        return ClusterSet(labels, z, z.copy(), np.zeros((n, 3), np.int64), int(passes))
    return ClusterSet(labels, steppable.means, steppable.normals, steppable.indices, int(passes))


def segment(grid: VoxelGrid, params: SegmentationParams | None = None):
    """Normals, classification, adjacency and labels in one call."""
    params = params or SegmentationParams()
    est = estimate_normals(grid, params)
    cls = classify_steppable(est, params, grid)
    step = est.subset(cls.steppable)
    adj = build_adjacency(step, params, grid.resolution)
    return est, cls, label_components(adj, step)


def write_debug_dump(path, clusters: ClusterSet) -> None:
    """Plain-text ``x y z label nx ny nz`` per steppable voxel."""
    with open(path, "w") as fh:
        for k in range(len(clusters.labels)):
            x, y, z = clusters.means[k]
            nx, ny, nz = clusters.normals[k]
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {int(clusters.labels[k])} "
                     f"{nx:.6f} {ny:.6f} {nz:.6f}\n")
