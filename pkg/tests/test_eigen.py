import numpy as np

from conftest import closed_form_eigh3
from voxplane.eigen import eigh3, jacobi_eigh3, smallest_eigvec


def _angle(a, b):
    c = abs(float(np.dot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return float(np.arccos(min(1.0, c)))


def test_matches_closed_form_on_random_matrices():
    rng = np.random.default_rng(7)
    worst_val = worst_vec = 0.0
    for _ in range(1000):
        m = rng.normal(size=(3, 3))
        m = m + m.T
        w, v = jacobi_eigh3(m)
        w_ref, v_ref = closed_form_eigh3(m)
        scale = max(1.0, np.max(np.abs(w_ref)))
        worst_val = max(worst_val, np.max(np.abs(w - w_ref)) / scale)
        gaps = np.diff(w_ref)
        for k in range(3):
            near = [gaps[j] for j in (k - 1, k) if 0 <= j < 2]
            if min(near) > 1e-3 * scale:
                worst_vec = max(worst_vec, _angle(v[:, k], v_ref[:, k]))
    assert worst_val < 1e-8
    assert worst_vec < 1e-6


def test_ascending_and_orthonormal():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.normal(size=(3, 3))
        cov = a @ a.T
        w, v = eigh3(cov)
        assert np.all(np.diff(w) >= 0)
        np.testing.assert_allclose(v.T @ v, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(cov @ v, v * w, atol=1e-9)


def test_diagonal_and_repeated():
    w, v = jacobi_eigh3(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [1.0, 2.0, 3.0])
    w, _ = jacobi_eigh3(np.eye(3) * 2.0)
    np.testing.assert_allclose(w, [2.0, 2.0, 2.0])
    w, _ = jacobi_eigh3(np.zeros((3, 3)))
    np.testing.assert_allclose(w, 0.0)


def test_smallest_eigvec_of_plane_covariance(rng):
    n = np.array([0.0, np.sin(np.radians(20)), np.cos(np.radians(20))])
    u = np.cross(n, [1.0, 0.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    ab = rng.uniform(-1, 1, (400, 2))
    pts = ab[:, :1] * u + ab[:, 1:] * v
    d = pts - pts.mean(0)
    e, w = smallest_eigvec(d.T @ d / len(d))
    assert w[0] < 1e-12 < w[1]
    assert _angle(e, n) < 1e-9
