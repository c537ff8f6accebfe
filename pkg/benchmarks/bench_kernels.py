"""Time the compiled and pure-Python sampling kernels on identical inputs.

    python benchmarks/bench_kernels.py [--repeat 3] [--n 20000]

Prints one line per kernel with the best time of each backend, the speed-up,
and whether the two backends agree (same indices, closeness to 1e-12).
"""
import argparse
import time

import numpy as np

from stekhom import kernels


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _same(a, b):
    """Indices must match exactly; closeness values may differ by BLAS rounding."""
    if isinstance(a, tuple):
        return np.array_equal(a[0], b[0]) and np.allclose(a[1], b[1], rtol=0, atol=1e-12)
    return np.array_equal(a, b)


def cases(n, rng):
    sph = rng.normal(size=(n, 3))
    sph /= np.linalg.norm(sph, axis=1, keepdims=True)
    tor = rng.random((n, 2))
    lat = np.eye(2)
    order = rng.permutation(n)
    centers_s = kernels.greedy_cover(sph, order, 0.1)
    centers_t = kernels.greedy_cover(tor, order, 0.02, lat)
    yield "greedy_cover sphere", lambda b: kernels.greedy_cover(sph, order, 0.1, backend=b)
    yield "greedy_cover torus", lambda b: kernels.greedy_cover(tor, order, 0.02, lat, backend=b)
    yield ("nearest_center sphere",
           lambda b: kernels.nearest_center(sph, sph[centers_s], backend=b))
    yield ("nearest_center torus",
           lambda b: kernels.nearest_center(tor, tor[centers_t], lat, backend=b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000, help="points per case")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"active backend: {kernels.BACKEND}")
    if kernels.BACKEND != "cython":
        print("compiled extension unavailable; nothing to compare")
        return 0
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'cython s':>11}{'python s':>11}{'speed-up':>10}  agree")
    for name, fn in cases(args.n, rng):
        tc, oc = _best(lambda: fn("cython"), args.repeat)
        tp, op = _best(lambda: fn("python"), args.repeat)
        print(f"{name:<24}{tc:>11.4f}{tp:>11.4f}{tp / tc:>10.1f}  {_same(oc, op)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
