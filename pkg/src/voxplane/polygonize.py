"""Boundary polygons for fitted planes.

Inliers are projected into an orthonormal basis of their plane, thinned by a
sound extreme-point prefilter, and closed with a monotone-chain convex hull.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .plane_fit import PlaneModel

FILTER_DIRECTIONS = 8


class DegeneratePolygonError(ValueError):
    """Input points are collinear (or too few) to bound an area."""


@dataclass
class PlanePolygon:
    plane: PlaneModel
    vertices2d: np.ndarray        # (k, 2) CCW, starting at the lexicographic minimum
    vertices3d: np.ndarray        # (k, 3)
    area: float
    inliers: np.ndarray | None = field(default=None, repr=False)
    source: str = field(default="", repr=False)   # scene primitive, for truth regions

    @property
    def cluster_label(self) -> int:
        return self.plane.cluster_label

    @property
    def inlier_count(self) -> int:
        return self.plane.inlier_count


def plane_basis(normal) -> tuple[np.ndarray, np.ndarray]:
    """In-plane ``(u, v)``: ``u`` from the world axis least aligned with the normal."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    u = axis - (axis @ n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def project_to_plane(plane: PlaneModel, points) -> np.ndarray:
    """2-D coordinates of ``points`` projected onto ``plane`` (an isometry on the plane)."""
    u, v = plane_basis(plane.normal)
    rel = np.asarray(points, dtype=np.float64).reshape(-1, 3) - plane.offset * np.asarray(plane.normal)
    return np.stack([rel @ u, rel @ v], axis=1)


def lift_to_plane(plane: PlaneModel, points2d) -> np.ndarray:
    u, v = plane_basis(plane.normal)
    p = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    return plane.offset * np.asarray(plane.normal) + p[:, :1] * u + p[:, 1:] * v


def filter_directions(k: int = FILTER_DIRECTIONS) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(k) / k
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


@njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(parallel=True, cache=True)
def _inside_mask(pts, poly, tol):
    """True where a point is strictly inside the convex CCW polygon ``poly``."""
    n = pts.shape[0]
    m = poly.shape[0]
    out = np.zeros(n, np.bool_)
    for i in prange(n):
        x = pts[i, 0]
        y = pts[i, 1]
        inside = True
        for e in range(m):
            a = poly[e]
            b = poly[(e + 1) % m]
            if _cross(a[0], a[1], b[0], b[1], x, y) <= tol:
                inside = False
                break
        out[i] = inside
    return out


def _extreme_polygon(pts, dirs):
    """Distinct extreme points along ``dirs``, in the directions' angular (CCW) order."""
    proj = pts @ dirs.T
    idx = np.argmax(proj, axis=0)
    seen, order = set(), []
    for i in idx:
        if int(i) not in seen:
            seen.add(int(i))
            order.append(int(i))
    return order


def hull_filter(points2d, directions: int = FILTER_DIRECTIONS, refine: bool = True) -> np.ndarray:
    """Indices of points that may be hull vertices.

    Points strictly inside the polygon spanned by the extreme points along
    ``directions`` fixed directions cannot be hull vertices and are dropped.
    With ``refine`` each polygon edge is pushed out once more to the point
    farthest beyond it (a quickhull step), which roughly doubles the polygon's
    vertex count and the rejection rate.
    """
    pts = np.ascontiguousarray(points2d, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n <= 3:
        return np.arange(n)
    order = _extreme_polygon(pts, filter_directions(directions))
    if refine and len(order) >= 3:
        poly = pts[order]
        grown = []
        for e in range(len(order)):
            a, b = poly[e], poly[(e + 1) % len(order)]
            grown.append(order[e])
            d = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
            j = int(np.argmin(d))
            if d[j] < 0:
                grown.append(j)
        order = grown
    if len(order) < 3:
        return np.arange(n)
    poly = np.ascontiguousarray(pts[order])
    scale = float(np.max(np.abs(pts))) if n else 1.0
    tol = 1e-12 * max(scale, 1e-300) ** 2
    inside = _inside_mask(pts, poly, tol)
    return np.flatnonzero(~inside)


def monotone_chain(points2d) -> np.ndarray:
    """Strictly convex CCW hull, starting at the lexicographic minimum."""
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    uniq = np.unique(pts, axis=0)  # lexicographic sort
    if len(uniq) < 3:
        raise DegeneratePolygonError("need at least 3 distinct points")
    p = [tuple(v) for v in uniq]

    def chain(seq):
        out = []
        for q in seq:
            while len(out) >= 2 and _cross(out[-2][0], out[-2][1], out[-1][0], out[-1][1],
                                           q[0], q[1]) <= 0.0:
                out.pop()
            out.append(q)
        return out

    lower = chain(p)
    upper = chain(reversed(p))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegeneratePolygonError("points are collinear")
    return np.asarray(hull)


def convex_hull(points2d, prefilter: bool = True) -> np.ndarray:
    pts = np.asarray(points2d, dtype=np.float64).reshape(-1, 2)
    if prefilter:
        pts = pts[hull_filter(pts)]
    return monotone_chain(pts)


def shoelace(vertices2d) -> float:
    v = np.asarray(vertices2d, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygonize(plane: PlaneModel, inliers, keep_inliers: bool = True) -> PlanePolygon:
    pts2 = project_to_plane(plane, inliers)
    hull2 = convex_hull(pts2)
    return PlanePolygon(plane, hull2, lift_to_plane(plane, hull2), shoelace(hull2),
                        np.asarray(inliers) if keep_inliers else None)


def polygonize_all(fits, min_area: float = 0.002, planes=None) -> tuple[list, list]:
    """Polygons for fit results; returns ``(polygons, rejected_labels)``.

    ``planes`` optionally overrides the plane used per fit (e.g. refined models).
    """
    polys, rejected = [], []
    for k, fit in enumerate(fits):
        plane = fit.plane if planes is None else planes[k]
        try:
            poly = polygonize(plane, fit.inliers)
        except DegeneratePolygonError:
            rejected.append(plane.cluster_label)
            continue
        if poly.area < min_area:
            rejected.append(plane.cluster_label)
            continue
        polys.append(poly)
    return polys, rejected
