import numpy as np
import pytest

from voxplane import config as C
from voxplane.frames import Pose, SensorFrame
from voxplane.heightmap import HeightMap, HeightMapParams, grow_regions, hm_integrate, hm_segment
from conftest import union_find_labels


def world_frame(points):
    return SensorFrame(np.asarray(points, dtype=np.float64).reshape(-1, 3), Pose())


def params():
    cfg = C.make_config()
    return HeightMapParams(C.seg_params(cfg), C.ransac_params(cfg), 0.002)


def grid_points(x0, x1, y0, y1, z, step=0.01):
    xs = np.arange(x0 + step / 2, x1, step)
    ys = np.arange(y0 + step / 2, y1, step)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), np.full(X.size, z)])


def test_single_point():
    hm = hm_integrate(HeightMap(0.01, (200, 200)), world_frame([[0.1, 0.1, 0.3]]))
    assert hm.height_at([0.1, 0.1]) == 0.3
    assert hm.valid.sum() == 1


def test_latest_wins():
    hm = HeightMap(0.01, (200, 200))
    hm_integrate(hm, world_frame([[0.1, 0.1, 0.0]]))
    hm_integrate(hm, world_frame([[0.1, 0.1, 0.5]]))
    assert hm.height_at([0.1, 0.1]) == 0.5
    # within one frame the later point wins too
    hm_integrate(hm, world_frame([[0.1, 0.1, 0.2], [0.101, 0.102, 0.7]]))
    assert hm.height_at([0.1, 0.1]) == 0.7


def test_empty_frame_and_out_of_bounds():
    hm = hm_integrate(HeightMap(0.01, (200, 200)), world_frame([[0.2, 0.2, 0.1]]))
    before = hm.heights.copy()
    hm_integrate(hm, world_frame(np.zeros((0, 3))))
    hm_integrate(hm, world_frame([[5.0, 5.0, 1.0]]))
    np.testing.assert_array_equal(hm.heights, before)
    assert hm.valid.sum() == 1


def test_recenter_moves_cells():
    hm = hm_integrate(HeightMap(0.01, (100, 100)), world_frame([[0.2, 0.1, 0.3], [-0.45, 0.0, 0.1]]))
    dropped = hm.recenter((0.1, 0.0))
    assert dropped == 1
    assert hm.height_at([0.2, 0.1]) == 0.3
    assert hm.height_at([-0.45, 0.0]) is None
    assert hm.recenter((0.1, 0.0)) == 0


def test_region_growing_matches_union_find(rng):
    hm = HeightMap(0.01, (40, 40))
    pts = grid_points(-0.2, 0.2, -0.2, 0.2, 0.0)
    pts[:, 2] = np.where(pts[:, 0] > 0.05, 0.15, 0.0) + rng.normal(0, 0.002, len(pts))
    keep = rng.uniform(size=len(pts)) > 0.2
    hm_integrate(hm, world_frame(pts[keep]))
    cells, _, labels = grow_regions(hm, 0.05)
    n = len(cells)
    index = {tuple(c): i for i, c in enumerate(cells)}
    edges = []
    for i, (x, y) in enumerate(cells):
        for dx, dy in ((1, 0), (0, 1)):
            j = index.get((x + dx, y + dy))
            if j is not None and abs(hm.heights[x, y] - hm.heights[x + dx, y + dy]) < 0.05:
                edges.append((i, j))
    np.testing.assert_array_equal(labels, union_find_labels(n, edges))


def test_flat_floor_one_polygon():
    hm = hm_integrate(HeightMap(0.01, (200, 200)), world_frame(grid_points(-0.5, 0.5, -0.5, 0.5, 0.0)))
    polys, _ = hm_segment(hm, params())
    assert len(polys) == 1
    assert polys[0].area == pytest.approx(0.99 * 0.99, rel=1e-6)


def test_empty_map_segments_to_nothing():
    polys, fits = hm_segment(HeightMap(0.01, (50, 50)), params())
    assert polys == [] and fits is None


def test_overhang_shrinks_floor():
    # floor first, then the underside of a slab reaching the floor edge
    hm = HeightMap(0.01, (200, 200))
    hm_integrate(hm, world_frame(grid_points(-0.5, 0.5, -0.5, 0.5, 0.0)))
    hm_integrate(hm, world_frame(grid_points(0.3, 0.5, -0.5, 0.5, 0.45)))
    polys, _ = hm_segment(hm, params())
    assert len(polys) == 2
    floor = min(polys, key=lambda p: p.plane.offset * p.plane.normal[2])
    assert floor.area < 1.0
    assert floor.vertices3d[:, 0].max() < 0.3
