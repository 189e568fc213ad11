"""2.5-D height-map baseline.

One height per (x, y) cell, latest measurement wins.  Anything stacked above
the same cell, such as a table top over a floor, overwrites what was below it,
and segmentation can only ever see one surface there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import SensorFrame
from .plane_fit import RansacParams, fit_planes
from .polygonize import polygonize_all
from .segmentation import Adjacency, SegmentationParams, propagate_labels


class HeightMap:
    def __init__(self, resolution=0.01, extent=(200, 200), center=(0.0, 0.0)):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.extent = tuple(int(e) for e in np.broadcast_to(np.asarray(extent), (2,)))
        if min(self.extent) <= 0:
            raise ValueError("extent must be positive")
        self.anchor = self._anchor_for(center)
        self.heights = np.zeros(self.extent)
        self.valid = np.zeros(self.extent, bool)

    def _anchor_for(self, center):
        c = np.asarray(center, dtype=np.float64)[:2] / self.resolution
        return np.round(c - np.asarray(self.extent) / 2.0).astype(np.int64)

    @property
    def origin(self) -> np.ndarray:
        return self.anchor * self.resolution

    def cell_of(self, xy) -> np.ndarray:
        g = np.floor(np.asarray(xy, dtype=np.float64)[..., :2] / self.resolution).astype(np.int64)
        return g - self.anchor

    def cell_centers(self, cells) -> np.ndarray:
        return self.origin + (np.asarray(cells, dtype=np.float64) + 0.5) * self.resolution

    def height_at(self, xy):
        c = self.cell_of(xy)
        if np.any(c < 0) or np.any(c >= np.asarray(self.extent)):
            return None
        return float(self.heights[c[0], c[1]]) if self.valid[c[0], c[1]] else None

    def recenter(self, center) -> int:
        """Shift the window by whole cells; returns the number of valid cells dropped."""
        new = self._anchor_for(center)
        s = new - self.anchor
        if not s.any():
            return 0
        before = int(self.valid.sum())
        h = np.zeros_like(self.heights)
        v = np.zeros_like(self.valid)
        nx, ny = self.extent
        sx, sy = int(s[0]), int(s[1])
        src_x = slice(max(sx, 0), min(nx, nx + sx))
        dst_x = slice(max(-sx, 0), min(nx, nx - sx))
        src_y = slice(max(sy, 0), min(ny, ny + sy))
        dst_y = slice(max(-sy, 0), min(ny, ny - sy))
        if src_x.start < src_x.stop and src_y.start < src_y.stop:
            h[dst_x, dst_y] = self.heights[src_x, src_y]
            v[dst_x, dst_y] = self.valid[src_x, src_y]
        self.heights, self.valid, self.anchor = h, v, new
        return before - int(v.sum())

    def cells(self):
        """Valid cells as ``(cells (n, 2), points (n, 3))`` in row-major order."""
        cells = np.argwhere(self.valid)
        xy = self.cell_centers(cells)
        return cells, np.column_stack([xy, self.heights[cells[:, 0], cells[:, 1]]])


def hm_integrate(hm: HeightMap, frame: SensorFrame) -> HeightMap:
    """Write each point's z into its cell; later points overwrite earlier ones."""
    frame.pose.validate()
    pts = frame.world_points()
    if len(pts) == 0:
        return hm
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    c = hm.cell_of(pts)
    ok = np.all((c >= 0) & (c < np.asarray(hm.extent)), axis=1)
    c, z = c[ok], pts[ok, 2]
    if len(z) == 0:
        return hm
    flat = c[:, 0] * hm.extent[1] + c[:, 1]
    # last occurrence per cell
    _, first_rev = np.unique(flat[::-1], return_index=True)
    last = len(flat) - 1 - first_rev
    hm.heights[c[last, 0], c[last, 1]] = z[last]
    hm.valid[c[last, 0], c[last, 1]] = True
    return hm


@dataclass
class HeightMapParams:
    segmentation: SegmentationParams
    ransac: RansacParams
    min_area: float = 0.002


def grow_regions(hm: HeightMap, max_step: float):
    """Label valid cells connected through 4-neighbors with ``|dh| < max_step``.

    Returns ``(cells, points, labels)``; labels are canonical-min ids.
    """
    cells, pts = hm.cells()
    n = len(cells)
    if n == 0:
        return cells, pts, np.zeros(0, np.int64)
    ids = np.full(hm.extent, -1, np.int64)
    ids[cells[:, 0], cells[:, 1]] = np.arange(n)
    edges = []
    for dx, dy in ((1, 0), (0, 1)):
        a = ids[: hm.extent[0] - dx, : hm.extent[1] - dy]
        b = ids[dx:, dy:]
        ha = hm.heights[: hm.extent[0] - dx, : hm.extent[1] - dy]
        hb = hm.heights[dx:, dy:]
        m = (a >= 0) & (b >= 0) & (np.abs(ha - hb) < max_step)
        edges.append(np.stack([a[m], b[m]], axis=1))
    adj = Adjacency.from_edges(n, np.concatenate(edges))
    labels, _ = propagate_labels(adj)
    return cells, pts, labels


def hm_segment(hm: HeightMap, params: HeightMapParams):
    """Region growing on heights, then RANSAC and convex hull per region.

    Only planes within the steppable slope limit are returned.
    """
    seg = params.segmentation
    cells, pts, labels = grow_regions(hm, seg.cluster_distance)
    if len(labels) == 0:
        return [], None
    uniq, counts = np.unique(labels, return_counts=True)
    regions = {int(u): pts[labels == u] for u, c in zip(uniq, counts) if c >= seg.min_cluster_size}
    fits = fit_planes(regions, params.ransac)
    up = np.asarray(seg.up)
    cos_max = np.cos(np.radians(seg.max_slope_deg))
    fits = [f for f in fits if abs(f.plane.normal @ up) >= cos_max]
    polys, _ = polygonize_all(fits, params.min_area)
    return polys, fits
