"""Robot-centric dense voxel map.

Each voxel stores the running mean of the points that fell in it, a point
count and a status code (0 free, 1 occupied, 2 steppable).  The mean is kept
as a ``(sum, count)`` pair and materialized on read, so integrating a frame
gives the same result for any point order up to float associativity.

Storage is a ring buffer over global voxel indices: moving the window only
clears the slabs that leave it, nothing is copied.  Public indices are always
*window* indices, ``0 <= i < extent``, relative to the current grid corner.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .frames import SensorFrame


class VoxelStatus(enum.IntEnum):
    FREE = 0
    OCCUPIED = 1
    STEPPABLE = 2


@dataclass(frozen=True)
class Voxel:
    mean: np.ndarray | None
    count: int
    status: VoxelStatus


@dataclass(frozen=True)
class UpdateStats:
    points_integrated: int
    voxels_touched: int
    points_out_of_bounds: int
    points_invalid: int

    @property
    def points_discarded(self) -> int:
        return self.points_out_of_bounds + self.points_invalid


@dataclass(frozen=True)
class ClearStats:
    voxels_cleared: int   # unique voxels traversed and reset
    voxels_freed: int     # of those, how many held points
    rays: int


@dataclass(frozen=True)
class ShiftStats:
    shift: tuple
    voxels_dropped: int


class VoxelGrid:
    """Dense voxel window of ``extent`` cells per axis.

    ``base`` fixes the world lattice (cell boundaries sit at
    ``base + k * resolution``); the window corner is ``base + anchor * resolution``.
    """

    def __init__(self, resolution=0.01, extent=(500, 500, 500), center=(0.0, 0.0, 0.0),
                 base=(0.0, 0.0, 0.0)):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        extent = tuple(int(e) for e in np.broadcast_to(np.asarray(extent), (3,)))
        if min(extent) <= 0:
            raise ValueError("extent must be positive on every axis")
        self.resolution = float(resolution)
        self.extent = extent
        self.base = np.asarray(base, dtype=np.float64).reshape(3)
        self.anchor = self._anchor_for(center)
        self.sums = np.zeros(extent + (3,), dtype=np.float64)
        self.counts = np.zeros(extent, dtype=np.int32)
        self.status = np.zeros(extent, dtype=np.uint8)
        self._mark = np.zeros(extent, dtype=np.uint8)

    def _anchor_for(self, center) -> np.ndarray:
        c = (np.asarray(center, dtype=np.float64) - self.base) / self.resolution
        return np.round(c - np.asarray(self.extent) / 2.0).astype(np.int64)

    @property
    def shape(self):
        return self.extent

    @property
    def origin(self) -> np.ndarray:
        """World position of the window corner."""
        return self.base + self.anchor * self.resolution

    @property
    def center(self) -> np.ndarray:
        return self.base + (self.anchor + np.asarray(self.extent) / 2.0) * self.resolution

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.extent) * self.resolution

    def world_to_index(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        g = np.floor((p - self.base) / self.resolution).astype(np.int64)
        return g - self.anchor

    def index_to_center(self, index) -> np.ndarray:
        i = np.asarray(index, dtype=np.float64)
        return self.origin + (i + 0.5) * self.resolution

    def in_bounds(self, index) -> np.ndarray:
        i = np.asarray(index)
        return np.all((i >= 0) & (i < np.asarray(self.extent)), axis=-1)

    def storage_index(self, index) -> tuple:
        i = np.asarray(index, dtype=np.int64)
        s = (i + self.anchor) % np.asarray(self.extent)
        return tuple(np.moveaxis(s, -1, 0))

    def voxel(self, index) -> Voxel:
        if not self.in_bounds(index):
            raise IndexError(f"voxel index {tuple(index)} outside the window")
        s = self.storage_index(index)
        c = int(self.counts[s])
        if c == 0:
            return Voxel(None, 0, VoxelStatus.FREE)
        return Voxel(self.sums[s] / c, c, VoxelStatus(int(self.status[s])))

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.counts))

    def clear(self) -> None:
        self.sums.fill(0.0)
        self.counts.fill(0)
        self.status.fill(0)

    def copy(self) -> "VoxelGrid":
        g = VoxelGrid.__new__(VoxelGrid)
        g.resolution, g.extent = self.resolution, self.extent
        g.base, g.anchor = self.base.copy(), self.anchor.copy()
        g.sums, g.counts, g.status = self.sums.copy(), self.counts.copy(), self.status.copy()
        g._mark = np.zeros_like(self._mark)
        return g


# kernels --------------------------------------------------------------------

@njit(cache=True)
def _integrate_kernel(pts, base, anchor, res, sums, counts, status, mark):
    nx, ny, nz = counts.shape
    n_ok = 0
    n_oob = 0
    n_bad = 0
    touched = 0
    for k in range(pts.shape[0]):
        x = pts[k, 0]
        y = pts[k, 1]
        z = pts[k, 2]
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            n_bad += 1
            continue
        gx = np.int64(np.floor((x - base[0]) / res))
        gy = np.int64(np.floor((y - base[1]) / res))
        gz = np.int64(np.floor((z - base[2]) / res))
        lx = gx - anchor[0]
        ly = gy - anchor[1]
        lz = gz - anchor[2]
        if lx < 0 or lx >= nx or ly < 0 or ly >= ny or lz < 0 or lz >= nz:
            n_oob += 1
            continue
        sx = gx % nx
        sy = gy % ny
        sz = gz % nz
        sums[sx, sy, sz, 0] += x
        sums[sx, sy, sz, 1] += y
        sums[sx, sy, sz, 2] += z
        counts[sx, sy, sz] += 1
        status[sx, sy, sz] = 1
        if mark[sx, sy, sz] == 0:
            mark[sx, sy, sz] = 1
            touched += 1
        n_ok += 1
    # unmark
    for k in range(pts.shape[0]):
        x = pts[k, 0]
        y = pts[k, 1]
        z = pts[k, 2]
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            continue
        gx = np.int64(np.floor((x - base[0]) / res))
        gy = np.int64(np.floor((y - base[1]) / res))
        gz = np.int64(np.floor((z - base[2]) / res))
        lx = gx - anchor[0]
        ly = gy - anchor[1]
        lz = gz - anchor[2]
        if lx < 0 or lx >= nx or ly < 0 or ly >= ny or lz < 0 or lz >= nz:
            continue
        mark[gx % nx, gy % ny, gz % nz] = 0
    return n_ok, touched, n_oob, n_bad


@njit(cache=True)
def _clip_segment(u0, d, lo, hi):
    """Parametric [t0, t1] of segment u0 + t*d, t in [0, 1], inside box [lo, hi]."""
    t0 = 0.0
    t1 = 1.0
    for a in range(3):
        if d[a] == 0.0:
            if u0[a] < lo[a] or u0[a] >= hi[a]:
                return 1.0, 0.0
        else:
            ta = (lo[a] - u0[a]) / d[a]
            tb = (hi[a] - u0[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    return t0, t1


@njit(cache=True)
def _axis_setup(u0a, da, cur):
    if da > 0.0:
        return 1, (cur + 1.0 - u0a) / da, 1.0 / da
    if da < 0.0:
        return -1, (cur - u0a) / da, -1.0 / da
    return 0, np.inf, np.inf


@njit(cache=True)
def _entry_cell(u0a, t_in, da, lo_a, hi_a):
    v = np.int64(np.floor(u0a + t_in * da))
    if v < np.int64(lo_a):
        v = np.int64(lo_a)
    if v > np.int64(hi_a) - 1:
        v = np.int64(hi_a) - 1
    return v


@njit(cache=True)
def _wrap(p, n):
    if p >= n:
        return p - n
    if p < 0:
        return p + n
    return p


@njit(cache=True)
def _walk_ray(u0, u1, lo, hi, mark, anchor, visit_out, n_out):
    """3-D DDA from cell(u0) to cell(u1) in voxel units.

    Marks every in-window cell strictly between the start and end cells.
    When ``visit_out`` has room, also records visited window cells there.
    """
    nx, ny, nz = mark.shape
    ex = np.int64(np.floor(u1[0]))
    ey = np.int64(np.floor(u1[1]))
    ez = np.int64(np.floor(u1[2]))
    cx = np.int64(np.floor(u0[0]))
    cy = np.int64(np.floor(u0[1]))
    cz = np.int64(np.floor(u0[2]))
    if cx == ex and cy == ey and cz == ez:
        return n_out
    dx = u1[0] - u0[0]
    dy = u1[1] - u0[1]
    dz = u1[2] - u0[2]
    t_in, t_out = _clip_segment(u0, (dx, dy, dz), lo, hi)
    if t_in > t_out:
        return n_out
    skip_first = True
    if t_in > 0.0:
        # origin outside the window: enter at the clipped point
        cx = _entry_cell(u0[0], t_in, dx, lo[0], hi[0])
        cy = _entry_cell(u0[1], t_in, dy, lo[1], hi[1])
        cz = _entry_cell(u0[2], t_in, dz, lo[2], hi[2])
        skip_first = False
    sx, tx, ddx = _axis_setup(u0[0], dx, cx)
    sy, ty, ddy = _axis_setup(u0[1], dy, cy)
    sz, tz, ddz = _axis_setup(u0[2], dz, cz)
    limit = abs(ex - cx) + abs(ey - cy) + abs(ez - cz) + 3
    # window coordinates and ring-buffer slots, stepped incrementally
    lx = cx - anchor[0]
    ly = cy - anchor[1]
    lz = cz - anchor[2]
    px = cx % nx
    py = cy % ny
    pz = cz % nz
    for _ in range(limit):
        if cx == ex and cy == ey and cz == ez:
            break
        if not skip_first:
            if 0 <= lx < nx and 0 <= ly < ny and 0 <= lz < nz:
                mark[px, py, pz] = 1
                if n_out < visit_out.shape[0]:
                    visit_out[n_out, 0] = lx
                    visit_out[n_out, 1] = ly
                    visit_out[n_out, 2] = lz
                    n_out += 1
        skip_first = False
        if tx <= ty and tx <= tz:
            if tx > 1.0 or tx > t_out:
                break
            cx += sx
            lx += sx
            px = _wrap(px + sx, nx)
            tx += ddx
        elif ty <= tz:
            if ty > 1.0 or ty > t_out:
                break
            cy += sy
            ly += sy
            py = _wrap(py + sy, ny)
            ty += ddy
        else:
            if tz > 1.0 or tz > t_out:
                break
            cz += sz
            lz += sz
            pz = _wrap(pz + sz, nz)
            tz += ddz
    return n_out


@njit(cache=True)
def _clear_kernel(origin_w, pts, base, anchor, res, mark):
    nx, ny, nz = mark.shape
    lo = np.empty(3, np.float64)
    hi = np.empty(3, np.float64)
    lo[0] = anchor[0]
    lo[1] = anchor[1]
    lo[2] = anchor[2]
    hi[0] = anchor[0] + nx
    hi[1] = anchor[1] + ny
    hi[2] = anchor[2] + nz
    u0 = (origin_w - base) / res
    u1 = np.empty(3, np.float64)
    dummy = np.empty((0, 3), np.int64)
    rays = 0
    for k in range(pts.shape[0]):
        x = pts[k, 0]
        y = pts[k, 1]
        z = pts[k, 2]
        if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
            continue
        u1[0] = (x - base[0]) / res
        u1[1] = (y - base[1]) / res
        u1[2] = (z - base[2]) / res
        _walk_ray(u0, u1, lo, hi, mark, anchor, dummy, 0)
        rays += 1
    return rays


# operations -----------------------------------------------------------------

def integrate_frame(grid: VoxelGrid, frame: SensorFrame) -> UpdateStats:
    """Insert a frame's points into the grid with the running-mean update."""
    frame.pose.validate()
    pts = np.ascontiguousarray(frame.world_points(), dtype=np.float64)
    n_ok, touched, n_oob, n_bad = _integrate_kernel(
        pts, grid.base, grid.anchor, grid.resolution,
        grid.sums, grid.counts, grid.status, grid._mark)
    return UpdateStats(int(n_ok), int(touched), int(n_oob), int(n_bad))


def clear_rays(grid: VoxelGrid, frame: SensorFrame) -> ClearStats:
    """Free every voxel crossed by a sensor ray, excluding both end cells.

    Cells are collected into a mark layer first so a voxel hit by many rays
    is reset once.
    """
    frame.pose.validate()
    pts = np.ascontiguousarray(frame.world_points(), dtype=np.float64)
    rays = _clear_kernel(frame.pose.translation.copy(), pts, grid.base, grid.anchor,
                         grid.resolution, grid._mark)
    flat = np.flatnonzero(grid._mark)
    counts = grid.counts.reshape(-1)
    freed = int(np.count_nonzero(counts[flat]))
    counts[flat] = 0
    grid.sums.reshape(-1, 3)[flat] = 0.0
    grid.status.reshape(-1)[flat] = VoxelStatus.FREE
    grid._mark.reshape(-1)[flat] = 0
    return ClearStats(int(flat.size), freed, int(rays))


def traverse_cells(grid: VoxelGrid, start, end) -> np.ndarray:
    """Window indices the clearing walk visits for one ray, in order."""
    u0 = (np.asarray(start, dtype=np.float64) - grid.base) / grid.resolution
    u1 = (np.asarray(end, dtype=np.float64) - grid.base) / grid.resolution
    lo = grid.anchor.astype(np.float64)
    hi = lo + np.asarray(grid.extent, dtype=np.float64)
    cap = int(np.sum(np.abs(np.floor(u1) - np.floor(u0)))) + 4
    out = np.zeros((cap, 3), np.int64)
    mark = np.zeros(grid.extent, np.uint8)
    n = _walk_ray(u0, u1, lo, hi, mark, grid.anchor, out, 0)
    return out[:n]


def recenter(grid: VoxelGrid, new_center) -> ShiftStats:
    """Move the window by whole voxels so its center is nearest ``new_center``."""
    new_anchor = grid._anchor_for(new_center)
    shift = new_anchor - grid.anchor
    if not shift.any():
        return ShiftStats((0, 0, 0), 0)
    ext = np.asarray(grid.extent)
    dropped = 0
    if np.any(np.abs(shift) >= ext):
        dropped = grid.n_occupied
        grid.clear()
        grid.anchor = new_anchor
        return ShiftStats(tuple(int(s) for s in shift), dropped)
    for axis in range(3):
        s = int(shift[axis])
        if s == 0:
            continue
        old = int(grid.anchor[axis])
        # global indices that leave the window on this axis
        if s > 0:
            leaving = np.arange(old, old + s)
        else:
            leaving = np.arange(old + ext[axis] + s, old + ext[axis])
        slots = leaving % ext[axis]
        sel = [slice(None)] * 3
        sel[axis] = slots
        sel = tuple(sel)
        dropped += int(np.count_nonzero(grid.counts[sel]))
        grid.counts[sel] = 0
        grid.status[sel] = 0
        grid.sums[sel] = 0.0
        grid.anchor[axis] = old + s
    return ShiftStats(tuple(int(s) for s in shift), dropped)


@dataclass
class OccupiedSet:
    """Array view of occupied voxels in lexicographic window-index order."""

    indices: np.ndarray   # (n, 3) int64 window indices
    means: np.ndarray     # (n, 3)
    counts: np.ndarray    # (n,)
    status: np.ndarray    # (n,) uint8

    def __len__(self):
        return len(self.counts)


def occupied_arrays(grid: VoxelGrid) -> OccupiedSet:
    storage = np.argwhere(grid.counts > 0)
    if len(storage) == 0:
        return OccupiedSet(np.zeros((0, 3), np.int64), np.zeros((0, 3)),
                           np.zeros(0, np.int32), np.zeros(0, np.uint8))
    ext = np.asarray(grid.extent)
    window = (storage - grid.anchor) % ext
    order = np.lexsort((window[:, 2], window[:, 1], window[:, 0]))
    window = window[order]
    s = tuple(storage[order].T)
    counts = grid.counts[s]
    means = grid.sums[s] / counts[:, None]
    return OccupiedSet(window.astype(np.int64), means, counts, grid.status[s])


def occupied_voxels(grid: VoxelGrid) -> list:
    """``(index, Voxel)`` pairs for every voxel with points, sorted by index."""
    occ = occupied_arrays(grid)
    return [(tuple(int(v) for v in occ.indices[k]),
             Voxel(occ.means[k], int(occ.counts[k]), VoxelStatus(int(occ.status[k]))))
            for k in range(len(occ))]


def set_status(grid: VoxelGrid, indices, value) -> None:
    if len(indices) == 0:
        return
    grid.status[grid.storage_index(indices)] = value
