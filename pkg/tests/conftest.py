import numpy as np
import pytest

from stekhom.mesh import SurfaceModel


@pytest.fixture
def torus():
    return SurfaceModel.flat_torus()


@pytest.fixture
def sphere():
    return SurfaceModel.round_sphere()


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
