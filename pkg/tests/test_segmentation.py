import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import closed_form_eigh3, random_geometric_graph, union_find_labels
from voxplane.frames import Pose, SensorFrame
from voxplane.segmentation import (Adjacency, SegmentationParams, SurfaceEstimates,
                                   build_adjacency, classify_steppable, estimate_normals,
                                   estimate_normals_from, label_components, propagate_labels,
                                   segment, write_debug_dump)
from voxplane.voxel_map import VoxelGrid, VoxelStatus, integrate_frame

P = SegmentationParams()


def plane_grid(normal, offset, half=0.2, step=0.0025, noise=0.0, rng=None, center=(0, 0, 0)):
    n = np.asarray(normal, float)
    n /= np.linalg.norm(n)
    u = np.cross(n, [1.0, 0, 0] if abs(n[0]) < 0.9 else [0, 1.0, 0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    a = np.arange(-half, half, step) + step / 2
    A, B = np.meshgrid(a, a)
    pts = offset * n + A.reshape(-1, 1) * u + B.reshape(-1, 1) * v + np.asarray(center)
    if noise:
        pts = pts + rng.normal(0, noise, (len(pts), 1)) * n
    g = VoxelGrid(0.01, extent=(64, 64, 64), center=offset * n + np.asarray(center))
    integrate_frame(g, SensorFrame(pts, Pose()))
    return g


def interior(est, grid, margin=3):
    i = est.indices
    lo, hi = i.min(0) + margin, i.max(0) - margin
    keep = np.ones(len(i), bool)
    for a in range(3):
        if hi[a] > lo[a]:
            keep &= (i[:, a] >= lo[a]) & (i[:, a] <= hi[a])
    return keep


def test_horizontal_plane_normals():
    g = plane_grid((0, 0, 1), 0.3)
    est = estimate_normals(g, P)
    assert est.valid.all()
    np.testing.assert_allclose(np.linalg.norm(est.normals, axis=1), 1.0, atol=1e-6)
    assert np.all(est.normals[:, 2] > np.cos(np.radians(1)))
    assert np.all(est.angle_to_up < 1.0)


def test_wall_normals_are_horizontal():
    g = plane_grid((1, 0, 0), 1.0)
    est = estimate_normals(g, P)
    k = interior(est, g) & est.valid
    assert k.sum() > 100
    assert np.all(np.abs(np.abs(est.normals[k, 0]) - 1) < 1e-6)
    assert np.all(np.abs(est.angle_to_up[k] - 90) < 1e-4)
    assert np.all(est.angle_to_up[est.valid] <= 90.0)


def test_tilted_plane_angle_matches_closed_form():
    n = (0.0, np.sin(np.radians(20)), np.cos(np.radians(20)))
    g = plane_grid(n, 0.1)
    est = estimate_normals(g, P)
    k = interior(est, g) & est.valid
    assert np.all(np.abs(est.angle_to_up[k] - 20.0) < 1.0)
    # a few voxels against the closed-form eigen oracle on their own windows
    idx = np.flatnonzero(k)[:20]
    for i in idx:
        d = np.abs(est.indices - est.indices[i]).max(axis=1) <= 1
        m = est.means[d]
        c = np.cov((m - m.mean(0)).T, bias=True)
        _, vecs = closed_form_eigh3(c)
        ref = vecs[:, 0] * np.sign(vecs[2, 0])
        assert np.degrees(np.arccos(min(1.0, abs(ref @ est.normals[i])))) < 1e-6


def test_noisy_plane_p95_error(rng):
    g = plane_grid((0, 0, 1), 0.2, step=0.002, noise=0.002, rng=rng)
    est = estimate_normals(g, P)
    k = interior(est, g, 1) & est.valid
    err = est.angle_to_up[k]
    assert np.percentile(err, 95) < 3.0


def test_sparse_and_collinear_are_invalid():
    means = np.array([[0.005, 0.005, 0.005], [0.015, 0.005, 0.005]])
    est = estimate_normals_from(np.floor(means / 0.01).astype(int), means, P)
    assert not est.valid.any() and np.all(est.neighbor_count == 2)
    line = np.array([[0.005 + 0.01 * k, 0.005, 0.005] for k in range(5)])
    est = estimate_normals_from(np.floor(line / 0.01).astype(int), line, P)
    assert not est.valid.any()
    assert np.all(est.neighbor_count[1:-1] == 3)


def _est(angle, count):
    return SurfaceEstimates(np.zeros((1, 3), np.int64), np.zeros((1, 3)), np.array([[0.0, 0, 1]]),
                            np.array([count]), np.array([angle]), np.array([True]))


@pytest.mark.parametrize("angle,count,expected", [
    (0.0, 10, True), (15.0, 3, True), (16.0, 10, False), (5.0, 2, False)])
def test_classify_thresholds_inclusive(angle, count, expected):
    assert classify_steppable(_est(angle, count), P).steppable[0] == expected


def test_classify_writes_statuses():
    g = plane_grid((0, 0, 1), 0.0)
    est = estimate_normals(g, P)
    cls = classify_steppable(est, P, g)
    for k in cls.step_ids[:10]:
        assert g.voxel(est.indices[k]).status is VoxelStatus.STEPPABLE


def _pair(dist, angle_deg):
    m = np.array([[0.105, 0.105, 0.105], [0.105 + dist, 0.105, 0.105]])
    a = np.radians(angle_deg)
    nrm = np.array([[0.0, 0.0, 1.0], [np.sin(a), 0.0, np.cos(a)]])
    return SurfaceEstimates.from_arrays(m, nrm, indices=np.floor(m / 0.01).astype(int))


@pytest.mark.parametrize("dist,angle,linked", [(0.012, 0.0, True), (0.012, 20.0, False),
                                               (0.06, 0.0, False), (0.049, 14.0, True)])
def test_adjacency_criteria(dist, angle, linked):
    adj = build_adjacency(_pair(dist, angle), P, 0.01)
    assert (adj.n_edges == 1) == linked


def test_adjacency_symmetric_and_matches_brute_force(rng):
    m = rng.uniform(0, 0.2, (400, 3))
    nrm = rng.normal([0, 0, 1], 0.15, (400, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    est = SurfaceEstimates.from_arrays(m, nrm, indices=np.floor(m / 0.01).astype(int))
    # duplicate cells break the one-mean-per-voxel assumption; keep the first
    _, first = np.unique(est.indices, axis=0, return_index=True)
    est = est.subset(np.sort(first))
    adj = build_adjacency(est, P, 0.01)
    d = np.linalg.norm(est.means[:, None] - est.means[None], axis=-1)
    c = est.normals @ est.normals.T
    ref = (d < 0.05) & (c > np.cos(np.radians(15))) & ~np.eye(len(d), dtype=bool)
    got = np.zeros_like(ref)
    e = adj.edges()
    got[e[:, 0], e[:, 1]] = got[e[:, 1], e[:, 0]] = True
    assert np.array_equal(got, ref)
    for i in range(len(d)):
        for j in adj.neighbors_of(i):
            assert i in adj.neighbors_of(j)


def test_two_separated_sets_give_two_clusters():
    a = np.array([[0.005 + 0.01 * k, 0.005, 0.005] for k in range(5)])
    b = a + [0.5, 0, 0]
    m = np.vstack([a, b])
    est = SurfaceEstimates.from_arrays(m, np.tile([0, 0, 1.0], (10, 1)),
                                       indices=np.floor(m / 0.01).astype(int))
    cs = label_components(build_adjacency(est, P, 0.01), est)
    assert len(cs) == 2
    assert sorted(cs.clusters) == [0, 5]


def test_chain_collapses_to_zero():
    adj = Adjacency.from_edges(10, [(k, k + 1) for k in range(9)])
    labels, _ = propagate_labels(adj)
    assert np.all(labels == 0)
    rev, _ = propagate_labels(adj, order=np.arange(10)[::-1])
    assert np.all(rev == 0)


def test_random_graphs_match_union_find(rng):
    for _ in range(50):
        n = 100
        edges = random_geometric_graph(rng, n, 0.12)
        adj = Adjacency.from_edges(n, edges)
        labels, _ = propagate_labels(adj)
        assert np.array_equal(labels, union_find_labels(n, edges))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 300), st.integers(1, 512))
def test_schedule_independence(seed, n, block):
    rng = np.random.default_rng(seed)
    edges = random_geometric_graph(rng, n, 0.15)
    ref = union_find_labels(n, edges)
    perm = rng.permutation(len(edges))
    adj = Adjacency.from_edges(n, edges[perm][:, ::-1] if len(edges) else edges)
    labels, _ = propagate_labels(adj, order=rng.permutation(n), block=block)
    assert np.array_equal(labels, ref)


def test_partition_property():
    g = plane_grid((0, 0, 1), 0.0)
    est, cls, cs = segment(g, P)
    members = np.concatenate(list(cs.clusters.values()))
    assert len(members) == cls.steppable.sum() == len(np.unique(members))


def test_empty_inputs():
    g = VoxelGrid(0.01, extent=(8, 8, 8))
    est = estimate_normals(g, P)
    assert len(est) == 0
    cs = label_components(build_adjacency(est, P), est)
    assert len(cs) == 0


def test_params_validation():
    with pytest.raises(ValueError):
        SegmentationParams(cluster_distance=0.0)
    with pytest.raises(ValueError):
        SegmentationParams(min_neighbors=0)


def test_debug_dump(tmp_path):
    g = plane_grid((0, 0, 1), 0.0, half=0.05)
    _, _, cs = segment(g, P)
    path = tmp_path / "dump.txt"
    write_debug_dump(path, cs)
    rows = np.loadtxt(path)
    assert rows.shape == (len(cs.labels), 7)
    assert np.all(rows[:, 3] == cs.labels)
