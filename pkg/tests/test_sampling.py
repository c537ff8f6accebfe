import numpy as np
import pytest

from stekhom.mesh import SurfaceModel, build_flat_torus_mesh, build_sphere_mesh, sphere_level_for_spacing
from stekhom.perforation import background_mesh
from stekhom.sampling import (SamplingError, SeparatedSet, audit_distances, candidate_grid,
                              certify_inner_balls, maximal_separated_set, pairwise_min_distance,
                              voronoi_partition, write_cells_csv)


def test_separation_and_cover_torus(torus):
    s = maximal_separated_set(torus, 0.3, seed=1)
    assert pairwise_min_distance(s) >= 0.3
    # every candidate (and hence the audit grid) is within eps of the set
    audit = candidate_grid(torus, 0.3 / 8)
    assert audit_distances(s, audit).max() <= 0.3
    assert s.audit_max_distance <= 0.3


def test_sphere_pi_separation_gives_few_points(sphere):
    # eps must stay below the injectivity scale (the radius); close to it the set is tiny
    s = maximal_separated_set(sphere, 0.99, seed=0)
    assert pairwise_min_distance(s) >= 0.99
    assert len(s) <= 20


def test_epsilon_out_of_range(sphere, torus):
    with pytest.raises(SamplingError):
        maximal_separated_set(sphere, 0.0)
    with pytest.raises(SamplingError):
        maximal_separated_set(torus, 0.6)
    with pytest.raises(SamplingError, match="budget"):
        maximal_separated_set(torus, 0.001)


def test_count_scales_like_eps_minus_two(torus):
    # Packing: N <= area / (pi eps^2 / 4); covering: N >= area / (pi eps^2).
    for eps in (0.2, 0.1, 0.05):
        n = len(maximal_separated_set(torus, eps, seed=3))
        assert 1 / np.pi <= n * eps**2 <= 4 / np.pi + 0.5


def test_determinism(sphere):
    a = maximal_separated_set(sphere, 0.3, seed=5)
    b = maximal_separated_set(sphere, 0.3, seed=5)
    c = maximal_separated_set(sphere, 0.3, seed=6)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.tobytes() != c.points.tobytes()


def test_json_roundtrip(torus):
    a = maximal_separated_set(torus, 0.25, seed=2)
    b = SeparatedSet.from_json(a.to_json())
    assert np.array_equal(a.points, b.points)
    assert b.model.describe() == torus.describe() and b.seed == 2


def test_single_point_owns_whole_sphere(sphere):
    s = SeparatedSet(0.5, np.array([[0.0, 0.0, 1.0]]), 0, sphere)
    mesh = build_sphere_mesh(sphere, sphere_level_for_spacing(0.1))
    cells = voronoi_partition(sphere, s, mesh)
    assert cells[0].area == pytest.approx(4 * np.pi, rel=1e-10)


def test_antipodal_pair_halves(sphere):
    s = SeparatedSet(0.5, np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]), 0, sphere)
    mesh = build_sphere_mesh(sphere, sphere_level_for_spacing(0.1))
    a, b = (c.area for c in voronoi_partition(sphere, s, mesh))
    assert a + b == pytest.approx(4 * np.pi, rel=1e-12)
    assert a == pytest.approx(2 * np.pi, rel=5e-3)


def test_partition_identity_torus(torus):
    s = maximal_separated_set(torus, 0.2, seed=1)
    cells = voronoi_partition(torus, s, background_mesh(torus, 0.2))
    assert sum(c.area for c in cells) == pytest.approx(1.0, rel=1e-10)
    # maximal on the candidate grid, so cells reach at most one grid step past eps
    assert all(c.max_distance <= 0.2 + s.grid_spacing for c in cells)


def test_partition_identity_sphere_and_inner_balls(sphere):
    s = maximal_separated_set(sphere, 0.4, seed=1)
    mesh = background_mesh(sphere, 0.4)
    cells = voronoi_partition(sphere, s, mesh)
    assert sum(c.area for c in cells) == pytest.approx(4 * np.pi, rel=1e-10)
    assert certify_inner_balls(sphere, s, mesh, 0.5)
    assert max(c.max_distance for c in cells) <= 3 * 0.4


def test_coarse_mesh_rejected(torus):
    s = maximal_separated_set(torus, 0.2, seed=1)
    with pytest.raises(SamplingError):
        voronoi_partition(torus, s, build_flat_torus_mesh(torus, 0.2))


def test_cells_csv(tmp_path, torus):
    s = maximal_separated_set(torus, 0.25, seed=1)
    cells = voronoi_partition(torus, s, background_mesh(torus, 0.25))
    p = write_cells_csv(tmp_path / "c.csv", cells, np.full(len(cells), 0.01))
    lines = p.read_text().splitlines()
    assert len(lines) == len(cells) + 1 and "area" in lines[0]


def test_skewed_lattice_sampling():
    m = SurfaceModel.flat_torus([[1.0, 0.5], [0.0, 0.8]])
    s = maximal_separated_set(m, 0.15, seed=0)
    assert pairwise_min_distance(s) >= 0.15
    cells = voronoi_partition(m, s, background_mesh(m, 0.15))
    assert sum(c.area for c in cells) == pytest.approx(0.8, rel=1e-10)
