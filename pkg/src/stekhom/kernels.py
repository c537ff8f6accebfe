"""Hot point-set kernels with a compiled backend and a numpy fallback.

The compiled extension ``stekhom._ckernels`` is used when it imports;
otherwise, or when ``STEKHOM_PURE_PYTHON=1`` is set, the numpy versions
below are used.  :data:`BACKEND` names the active one.

Conventions shared by both backends: sphere points are unit vectors and
closeness is the inner product; torus points are chart coordinates and
closeness is the squared minimal-image distance.  Ties go to the lowest
center index.
"""
from __future__ import annotations

import os

import numpy as np

_CHUNK = 4096
_TRANSLATES = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


def _torus_d2(diff: np.ndarray, lat: np.ndarray, inv: np.ndarray) -> np.ndarray:
    u = diff @ inv.T
    u -= np.floor(u + 0.5)
    base = u @ lat.T
    shifts = _TRANSLATES @ lat.T
    cand = base[..., None, :] + shifts
    return np.min(np.sum(cand * cand, axis=-1), axis=-1)


def py_greedy_cover_torus(cand, order, eps2, lat, inv):
    covered = np.zeros(len(cand), dtype=bool)
    acc = []
    for c in order:
        if covered[c]:
            continue
        acc.append(c)
        covered |= _torus_d2(cand - cand[c], lat, inv) < eps2
    return np.array(acc, dtype=np.int64)


def py_greedy_cover_sphere(cand, order, cos_thr):
    covered = np.zeros(len(cand), dtype=bool)
    acc = []
    for c in order:
        if covered[c]:
            continue
        acc.append(c)
        covered |= cand @ cand[c] > cos_thr
    return np.array(acc, dtype=np.int64)


def py_nearest_torus(pts, centers, lat, inv):
    idx = np.empty(len(pts), dtype=np.int64)
    best = np.empty(len(pts))
    step = max(1, _CHUNK * 16 // max(len(centers), 1))
    for s in range(0, len(pts), step):
        blk = pts[s:s + step]
        d2 = _torus_d2(blk[:, None, :] - centers[None, :, :], lat, inv)
        k = np.argmin(d2, axis=1)
        idx[s:s + len(blk)] = k
        best[s:s + len(blk)] = d2[np.arange(len(blk)), k]
    return idx, best


def py_nearest_sphere(pts, centers):
    idx = np.empty(len(pts), dtype=np.int64)
    best = np.empty(len(pts))
    for s in range(0, len(pts), _CHUNK):
        dots = pts[s:s + _CHUNK] @ centers.T
        k = np.argmax(dots, axis=1)
        idx[s:s + len(k)] = k
        best[s:s + len(k)] = dots[np.arange(len(k)), k]
    return idx, best


_PY = {
    "greedy_cover_torus": py_greedy_cover_torus,
    "greedy_cover_sphere": py_greedy_cover_sphere,
    "nearest_torus": py_nearest_torus,
    "nearest_sphere": py_nearest_sphere,
}

_impl = dict(_PY)
BACKEND = "python"
if os.environ.get("STEKHOM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        _impl = {name: getattr(_ckernels, name) for name in _PY}
        BACKEND = "cython"


def _arr(x, dtype=float):
    return np.ascontiguousarray(x, dtype=dtype)


def greedy_cover(cand, order, eps, lattice=None, backend=None):
    """Indices of candidates accepted by greedy ε-separated insertion.

    ``cand`` are unit vectors (sphere, ``eps`` in radians) or chart points
    (torus with ``lattice``).  Candidates are visited in ``order``.
    """
    impl = _PY if backend == "python" else _impl
    cand, order = _arr(cand), _arr(order, np.int64)
    if lattice is None:
        return impl["greedy_cover_sphere"](cand, order, float(np.cos(eps)))
    lat = _arr(lattice)
    return impl["greedy_cover_torus"](cand, order, float(eps) ** 2, lat, _arr(np.linalg.inv(lat)))


def nearest_center(pts, centers, lattice=None, backend=None):
    """(index, closeness) of the nearest center for every point.

    Closeness is the inner product (sphere) or squared distance (torus).
    """
    impl = _PY if backend == "python" else _impl
    pts, centers = _arr(pts), _arr(centers)
    if lattice is None:
        return impl["nearest_sphere"](pts, centers)
    lat = _arr(lattice)
    return impl["nearest_torus"](pts, centers, lat, _arr(np.linalg.inv(lat)))
