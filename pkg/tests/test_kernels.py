"""The compiled and pure-Python kernels must agree exactly on indices."""
import numpy as np
import pytest

from conftest import random_unit
from stekhom import kernels

needs_cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")


@needs_cython
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_greedy_cover_backends_agree(seed):
    rng = np.random.default_rng(seed)
    sph = random_unit(rng, 3000)
    order = rng.permutation(len(sph))
    a = kernels.greedy_cover(sph, order, 0.2, backend="cython")
    b = kernels.greedy_cover(sph, order, 0.2, backend="python")
    assert np.array_equal(a, b)
    tor = rng.random((3000, 2))
    lat = np.array([[1.0, 0.5], [0.0, 0.9]])
    a = kernels.greedy_cover(tor, order, 0.05, lat, backend="cython")
    b = kernels.greedy_cover(tor, order, 0.05, lat, backend="python")
    assert np.array_equal(a, b)


@needs_cython
def test_nearest_center_backends_agree():
    rng = np.random.default_rng(4)
    pts, cen = random_unit(rng, 2000), random_unit(rng, 50)
    (ia, ca), (ib, cb) = (kernels.nearest_center(pts, cen, backend=b) for b in ("cython", "python"))
    assert np.array_equal(ia, ib) and np.allclose(ca, cb, atol=1e-14)
    pts, cen = rng.random((2000, 2)), rng.random((50, 2))
    (ia, ca), (ib, cb) = (kernels.nearest_center(pts, cen, np.eye(2), backend=b)
                          for b in ("cython", "python"))
    assert np.array_equal(ia, ib) and np.allclose(ca, cb, atol=1e-14)


def test_greedy_cover_is_separated_and_maximal():
    rng = np.random.default_rng(0)
    cand = rng.random((1500, 2))
    order = np.arange(len(cand))
    acc = kernels.greedy_cover(cand, order, 0.1, np.eye(2), backend="python")
    idx, d2 = kernels.nearest_center(cand, cand[acc], np.eye(2), backend="python")
    assert d2.max() < 0.01
    sub = cand[acc]
    d = sub[:, None] - sub[None]
    d -= np.round(d)
    dist = np.linalg.norm(d, axis=-1) + np.eye(len(sub)) * 9
    assert dist.min() >= 0.1


def test_pure_python_fallback_selected_by_env():
    import subprocess
    import sys
    out = subprocess.run([sys.executable, "-c", "from stekhom import kernels; print(kernels.BACKEND)"],
                         env={"STEKHOM_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
