import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_hull, gift_wrap_hull
from voxplane.plane_fit import PlaneModel
from voxplane.plane_fit import FitResult
from voxplane.polygonize import (DegeneratePolygonError, convex_hull, hull_filter, lift_to_plane,
                                 monotone_chain, plane_basis, polygonize, polygonize_all,
                                 project_to_plane, shoelace)


def plane(normal=(0, 0, 1), offset=0.0, label=0):
    n = np.asarray(normal, float)
    return PlaneModel(n / np.linalg.norm(n), offset, 0, label)


def random_set(rng, kind, n):
    if kind == "square":
        return rng.uniform(-1, 1, (n, 2))
    if kind == "disk":
        r, t = np.sqrt(rng.uniform(0, 1, n)), rng.uniform(0, 2 * np.pi, n)
        return np.column_stack([r * np.cos(t), r * np.sin(t)])
    if kind == "gauss":
        return rng.normal(size=(n, 2)) * [3.0, 0.2]
    if kind == "lattice":
        return rng.integers(-6, 7, (n, 2)).astype(float)
    t = rng.uniform(0, 2 * np.pi, n)          # points on a circle
    return np.column_stack([np.cos(t), np.sin(t)])


def assert_strictly_convex_ccw(v):
    e = np.roll(v, -1, axis=0) - v
    f = np.roll(e, -1, axis=0)
    assert np.all(e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0] > 0)


def test_projection_is_isometry(rng):
    p = plane((0, 0, 1))
    xy = project_to_plane(p, [[3.0, 4.0, 0.0]])
    assert abs(np.linalg.norm(xy) - 5.0) < 1e-12
    for normal in [(1, 2, 3), (0, 1, 0), (-1, 0.2, 0.1)]:
        q = plane(normal, 0.7)
        pts = lift_to_plane(q, rng.uniform(-1, 1, (100, 2)))
        np.testing.assert_allclose(pts @ q.normal, 0.7, atol=1e-12)
        xy = project_to_plane(q, pts)
        d3 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        d2 = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
        np.testing.assert_allclose(d2, d3, atol=1e-12)
        np.testing.assert_allclose(lift_to_plane(q, xy), pts, atol=1e-12)


def test_basis_is_deterministic_and_orthonormal():
    u, v = plane_basis((0.0, 0.0, 1.0))
    np.testing.assert_allclose(u, [1, 0, 0])
    np.testing.assert_allclose(v, [0, 1, 0])
    u, v = plane_basis((0.3, -0.5, 0.8))
    n = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
    np.testing.assert_allclose([u @ u, v @ v, u @ v, u @ n, v @ n], [1, 1, 0, 0, 0], atol=1e-12)


def test_filter_on_disk_is_small_and_sound(rng):
    pts = random_set(rng, "disk", 10000)
    keep = hull_filter(pts)
    assert len(keep) < 0.05 * len(pts)
    hull = gift_wrap_hull(pts)
    kept = {tuple(p) for p in pts[keep]}
    assert all(tuple(v) in kept for v in hull)


def test_filter_square_with_interior(rng):
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    pts = np.vstack([rng.uniform(0.01, 0.99, (1000, 2)), corners])
    keep = hull_filter(pts)
    assert sorted(map(tuple, pts[keep])) == sorted(map(tuple, corners))


def test_filter_three_points():
    assert list(hull_filter(np.array([[0.0, 0], [1, 0], [0, 1]]))) == [0, 1, 2]


def test_unit_square_hull():
    pts = np.array([[0.0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.2, 0.7], [0.5, 0.0]])
    v = convex_hull(pts)
    np.testing.assert_array_equal(v, [[0, 0], [1, 0], [1, 1], [0, 1]])
    assert shoelace(v) == pytest.approx(1.0)


def test_regular_17gon():
    t = 2 * np.pi * np.arange(17) / 17
    pts = np.column_stack([np.cos(t), np.sin(t)])
    v = convex_hull(pts[::-1])
    assert len(v) == 17
    assert_strictly_convex_ccw(v)
    np.testing.assert_array_equal(v, gift_wrap_hull(pts))


def test_collinear_raises():
    with pytest.raises(DegeneratePolygonError):
        convex_hull(np.column_stack([np.linspace(0, 1, 20), np.linspace(0, 2, 20)]))
    with pytest.raises(DegeneratePolygonError):
        convex_hull(np.ones((5, 2)))


def test_200_random_sets_match_oracle():
    rng = np.random.default_rng(11)
    kinds = ["square", "disk", "gauss", "lattice", "circle"]
    for t in range(200):
        pts = random_set(rng, kinds[t % 5], int(rng.integers(3, 1001)))
        try:
            ref = gift_wrap_hull(pts)
        except (RuntimeError, IndexError):
            continue
        if len(ref) < 3:
            continue
        v = convex_hull(pts)
        np.testing.assert_array_equal(v, ref)
        assert np.array_equal(monotone_chain(pts), v)
        kept = {tuple(p) for p in pts[hull_filter(pts)]}
        assert all(tuple(q) in kept for q in ref)


def test_gift_wrap_agrees_with_pairwise_oracle():
    rng = np.random.default_rng(12)
    for t in range(40):
        pts = random_set(rng, ["square", "lattice"][t % 2], 40)
        np.testing.assert_array_equal(gift_wrap_hull(pts), brute_force_hull(pts))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=80))
def test_filter_then_hull_equals_plain_hull(pts):
    pts = np.asarray(pts, float)
    try:
        plain = monotone_chain(pts)
    except DegeneratePolygonError:
        with pytest.raises(DegeneratePolygonError):
            convex_hull(pts)
        return
    np.testing.assert_array_equal(convex_hull(pts), plain)
    assert_strictly_convex_ccw(plain)


def test_polygonize_containment_and_area(rng):
    q = plane((0.1, -0.2, 1.0), 0.3, label=4)
    pts = lift_to_plane(q, rng.uniform(-0.3, 0.3, (2000, 2))) + rng.normal(0, 1e-4, (2000, 1)) * q.normal
    poly = polygonize(q, pts)
    assert poly.cluster_label == 4
    assert_strictly_convex_ccw(poly.vertices2d)
    assert poly.area == pytest.approx(shoelace(poly.vertices2d), rel=1e-12)
    xy = project_to_plane(q, pts)
    v = poly.vertices2d
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        cross = (b[0] - a[0]) * (xy[:, 1] - a[1]) - (b[1] - a[1]) * (xy[:, 0] - a[0])
        assert np.all(cross / np.linalg.norm(b - a) >= -1e-9)
    np.testing.assert_allclose(poly.vertices3d @ q.normal, 0.3, atol=1e-12)
    assert tuple(v[0]) == min(map(tuple, v))


def test_polygonize_all_rejects_small_and_degenerate(rng):
    big = lift_to_plane(plane(), rng.uniform(0, 0.2, (200, 2)))
    tiny = lift_to_plane(plane(), rng.uniform(0, 0.01, (50, 2)))
    line = np.column_stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)])
    fits = [FitResult(plane(label=k), p, np.arange(len(p)), 0) for k, p in enumerate([big, tiny, line])]
    polys, rejected = polygonize_all(fits, min_area=0.002)
    assert [p.cluster_label for p in polys] == [0]
    assert rejected == [1, 2]
