# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_kernels_py``; same signatures."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fabs, INFINITY

cnp.import_array()

cdef double BALL_RTOL = 1e-12


def scale_maxima(const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] indices,
                 const double[::1] dists, const double[::1] values,
                 const double[::1] radii):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t K = radii.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] amp_a = np.zeros((n, K))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] slope_a = np.zeros((n, K))
    cdef double[:, ::1] amp = amp_a
    cdef double[:, ::1] slope = slope_a
    cdef double[::1] lim = np.empty(K)
    cdef Py_ssize_t x, p, k, b
    cdef double fx, delta, q, d
    for k in range(K):
        lim[k] = radii[k] * (1.0 + BALL_RTOL)
    with nogil:
        for x in range(n):
            fx = values[x]
            for p in range(indptr[x], indptr[x + 1]):
                d = dists[p]
                if d > lim[0]:
                    continue
                b = 0
                while b + 1 < K and d <= lim[b + 1]:
                    b += 1
                delta = fabs(values[indices[p]] - fx)
                q = delta / d
                if delta > amp[x, b]:
                    amp[x, b] = delta
                if q > slope[x, b]:
                    slope[x, b] = q
            for k in range(K - 2, -1, -1):
                if amp[x, k + 1] > amp[x, k]:
                    amp[x, k] = amp[x, k + 1]
                if slope[x, k + 1] > slope[x, k]:
                    slope[x, k] = slope[x, k + 1]
    return amp_a, slope_a


cdef inline double _dist(const double[:, ::1] c, Py_ssize_t i, Py_ssize_t j,
                         double alpha) nogil:
    cdef Py_ssize_t k
    cdef double s = 0.0, t
    for k in range(c.shape[1]):
        t = c[i, k] - c[j, k]
        s = s + t * t
    s = sqrt(s)
    if alpha != 1.0:
        s = pow(s, alpha)
    return s


def cross_dist(a, b, double alpha):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=float)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=float)
    cdef Py_ssize_t m = A.shape[0], n = B.shape[0], dim = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_a = np.empty((m, n))
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, j, k
    cdef double s, t
    with nogil:
        for i in range(m):
            for j in range(n):
                s = 0.0
                for k in range(dim):
                    t = A[i, k] - B[j, k]
                    s = s + t * t
                s = sqrt(s)
                if alpha != 1.0:
                    s = pow(s, alpha)
                out[i, j] = s
    return out_a


def max_slope_coords(coords, double alpha, values):
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=float)
    cdef const double[::1] f = np.ascontiguousarray(values, dtype=float)
    cdef Py_ssize_t n = f.shape[0], i, j, bi = -1, bj = -1
    cdef double best = 0.0, q
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                q = fabs(f[i] - f[j]) / _dist(c, i, j, alpha)
                if q > best:
                    best = q
                    bi = i
                    bj = j
    return best, bi, bj


def max_slope_dense(dist, values):
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=float)
    cdef const double[::1] f = np.ascontiguousarray(values, dtype=float)
    cdef Py_ssize_t n = f.shape[0], i, j, bi = -1, bj = -1
    cdef double best = 0.0, q
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                q = fabs(f[i] - f[j]) / D[i, j]
                if q > best:
                    best = q
                    bi = i
                    bj = j
    return best, bi, bj


def mcshane_coords(coords, double alpha, anchors, anchor_values, double lip):
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=float)
    cdef const cnp.int64_t[::1] A = np.ascontiguousarray(anchors, dtype=np.int64)
    cdef const double[::1] fa = np.ascontiguousarray(anchor_values, dtype=float)
    cdef Py_ssize_t n = c.shape[0], m = A.shape[0], y, a
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef double best, cand
    with nogil:
        for y in range(n):
            best = INFINITY
            for a in range(m):
                cand = fa[a] + lip * _dist(c, A[a], y, alpha)
                if cand < best:
                    best = cand
            out[y] = best
    return out_a


def mcshane_dense(dist, anchors, anchor_values, double lip):
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=float)
    cdef const cnp.int64_t[::1] A = np.ascontiguousarray(anchors, dtype=np.int64)
    cdef const double[::1] fa = np.ascontiguousarray(anchor_values, dtype=float)
    cdef Py_ssize_t n = D.shape[0], m = A.shape[0], y, a
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef double best, cand
    with nogil:
        for y in range(n):
            best = INFINITY
            for a in range(m):
                cand = fa[a] + lip * D[A[a], y]
                if cand < best:
                    best = cand
            out[y] = best
    return out_a
