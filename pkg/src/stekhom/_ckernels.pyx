# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the point-set kernels in :mod:`stekhom.kernels`.

Both kernels use exactly the comparison formulas of the numpy fallback so
the two backends agree on every non-tied input.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _torus_d2(double dx, double dy, const double[:, ::1] lat,
                             const double[:, ::1] inv) noexcept nogil:
    cdef double u0 = inv[0, 0] * dx + inv[0, 1] * dy
    cdef double u1 = inv[1, 0] * dx + inv[1, 1] * dy
    u0 -= floor(u0 + 0.5)
    u1 -= floor(u1 + 0.5)
    cdef double bx = lat[0, 0] * u0 + lat[0, 1] * u1
    cdef double by = lat[1, 0] * u0 + lat[1, 1] * u1
    cdef double best = 1e300, cx, cy, d2
    cdef int i, j
    for i in range(-1, 2):
        for j in range(-1, 2):
            cx = bx + lat[0, 0] * i + lat[0, 1] * j
            cy = by + lat[1, 0] * i + lat[1, 1] * j
            d2 = cx * cx + cy * cy
            if d2 < best:
                best = d2
    return best


def greedy_cover_torus(const double[:, ::1] cand, const long[::1] order, double eps2,
                       const double[:, ::1] lat, const double[:, ::1] inv):
    cdef Py_ssize_t n = order.shape[0], k, a, m = 0, c
    cdef long[::1] acc = np.empty(n, dtype=np.int64)
    cdef bint ok
    with nogil:
        for k in range(n):
            c = order[k]
            ok = True
            for a in range(m):
                if _torus_d2(cand[c, 0] - cand[acc[a], 0], cand[c, 1] - cand[acc[a], 1],
                             lat, inv) < eps2:
                    ok = False
                    break
            if ok:
                acc[m] = c
                m += 1
    return np.asarray(acc[:m]).copy()


def greedy_cover_sphere(const double[:, ::1] cand, const long[::1] order, double cos_thr):
    cdef Py_ssize_t n = order.shape[0], k, a, m = 0, c, p
    cdef long[::1] acc = np.empty(n, dtype=np.int64)
    cdef bint ok
    cdef double dot
    with nogil:
        for k in range(n):
            c = order[k]
            ok = True
            for a in range(m):
                p = acc[a]
                dot = cand[c, 0] * cand[p, 0] + cand[c, 1] * cand[p, 1] + cand[c, 2] * cand[p, 2]
                if dot > cos_thr:
                    ok = False
                    break
            if ok:
                acc[m] = c
                m += 1
    return np.asarray(acc[:m]).copy()


def nearest_torus(const double[:, ::1] pts, const double[:, ::1] centers,
                  const double[:, ::1] lat, const double[:, ::1] inv):
    cdef Py_ssize_t n = pts.shape[0], nc = centers.shape[0], i, j
    cdef long[::1] idx = np.empty(n, dtype=np.int64)
    cdef double[::1] best = np.empty(n)
    cdef double d2, b
    cdef long bj
    with nogil:
        for i in range(n):
            b = 1e300
            bj = 0
            for j in range(nc):
                d2 = _torus_d2(pts[i, 0] - centers[j, 0], pts[i, 1] - centers[j, 1], lat, inv)
                if d2 < b:
                    b = d2
                    bj = j
            idx[i] = bj
            best[i] = b
    return np.asarray(idx), np.asarray(best)


def nearest_sphere(const double[:, ::1] pts, const double[:, ::1] centers):
    cdef Py_ssize_t n = pts.shape[0], nc = centers.shape[0], i, j
    cdef long[::1] idx = np.empty(n, dtype=np.int64)
    cdef double[::1] best = np.empty(n)
    cdef double dot, b
    cdef long bj
    with nogil:
        for i in range(n):
            b = -1e300
            bj = 0
            for j in range(nc):
                dot = pts[i, 0] * centers[j, 0] + pts[i, 1] * centers[j, 1] + pts[i, 2] * centers[j, 2]
                if dot > b:
                    b = dot
                    bj = j
            idx[i] = bj
            best[i] = b
    return np.asarray(idx), np.asarray(best)
