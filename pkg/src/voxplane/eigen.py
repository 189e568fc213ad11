"""Cyclic Jacobi eigensolver for symmetric 3x3 matrices."""

import numpy as np
from numba import njit

MAX_SWEEPS = 30
OFF_TOL = 1e-10


@njit(cache=True)
def jacobi_eigh3(m, tol=OFF_TOL, max_sweeps=MAX_SWEEPS):
    """Eigen-decomposition of a symmetric 3x3 matrix.

    Returns ``(w, V)`` with eigenvalues ascending and eigenvectors in the
    columns of ``V``.  Sweeps stop once the off-diagonal Frobenius norm falls
    below ``tol`` times the matrix norm.
    """
    a = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            a[i, j] = 0.5 * (m[i, j] + m[j, i])
    v = np.eye(3)
    norm = 0.0
    for i in range(3):
        for j in range(3):
            norm += a[i, j] * a[i, j]
    norm = np.sqrt(norm)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * (a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2))
        if off <= tol * norm:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J
                for k in range(3):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(3):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(3):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    w = np.empty(3)
    for i in range(3):
        w[i] = a[i, i]
    order = np.argsort(w)
    ws = np.empty(3)
    vs = np.empty((3, 3))
    for k in range(3):
        ws[k] = w[order[k]]
        for r in range(3):
            vs[r, k] = v[r, order[k]]
    return ws, vs


@njit(cache=True)
def smallest_eigvec(cov):
    """Unit eigenvector of the smallest eigenvalue and all three eigenvalues."""
    w, v = jacobi_eigh3(cov)
    n = v[:, 0].copy()
    n /= np.sqrt(n[0] ** 2 + n[1] ** 2 + n[2] ** 2)
    return n, w


def eigh3(m):
    """Python-facing wrapper around :func:`jacobi_eigh3`."""
    return jacobi_eigh3(np.ascontiguousarray(m, dtype=np.float64))
