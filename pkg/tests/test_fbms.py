import numpy as np
import pytest

from stekhom.fbms import (GROUP_ORDERS, SPHERE_BIT, SUPPORTED, REFERENCE_SURFACES, FBMSError, area_gradient,
                          area_hessian, build_group, build_wedge, evolve, fbms_diagnostics,
                          group_closure, half_disk_state, init_disk_in_wedge,
                          reflect_to_full_surface, refine, run_fbms, solve_critical,
                          symmetry_defect, tiling_audit)
from stekhom.mesh import build_disk_mesh, embed_planar

KINDS = ("tetrahedral", "octahedral", "icosahedral")


@pytest.mark.parametrize("kind,order", [("tetrahedral", 24), ("octahedral", 48),
                                        ("icosahedral", 120)])
def test_group_orders(kind, order):
    g = build_group(kind)
    assert g.order == order == GROUP_ORDERS[kind]
    assert np.allclose(np.linalg.norm(g.generators, axis=1), 1, atol=1e-14)
    # closed under composition and made of orthogonal matrices
    prods = np.einsum("aij,bjk->abik", g.elements, g.elements).reshape(-1, 9)
    flat = g.elements.reshape(-1, 9)
    d = np.abs(prods[:, None, :] - flat[None, :, :]).max(axis=2).min(axis=1)
    assert d.max() < 1e-10
    assert np.allclose(np.einsum("gij,gkj->gik", g.elements, g.elements), np.eye(3), atol=1e-12)


def test_closure_of_single_reflection():
    assert len(group_closure(np.array([[0.0, 0.0, 1.0]]))) == 2


@pytest.mark.parametrize("kind", KINDS)
def test_wedge_geometry_and_tiling(kind):
    w = build_wedge(kind)
    ang = w.dihedral_angles()
    assert ang["13"] == pytest.approx(np.pi / 2, abs=1e-12)
    assert w.solid_angle() == pytest.approx(4 * np.pi / GROUP_ORDERS[kind], rel=1e-12)
    audit = tiling_audit(w, build_group(kind), samples=5000)
    assert audit["relative_error"] <= 1e-6
    assert audit["points_with_one_image"] == audit["samples"]


def test_unsupported_pair_lists_supported():
    with pytest.raises(FBMSError, match="supported pairs"):
        init_disk_in_wedge(build_wedge("tetrahedral"), 6)
    assert SUPPORTED["icosahedral"] == (12, 20, 32)


def right_corners(state, wedge):
    angles = wedge.dihedral_angles()
    count = 0
    for c in state.meta["corners"]:
        bits = int(state.faces[c])
        planes = [i + 1 for i in range(3) if bits & (1 << i)]
        if bits & SPHERE_BIT or angles[f"{planes[0]}{planes[1]}"] == pytest.approx(np.pi / 2):
            count += 1
    return count


def test_tetrahedral_init_pattern():
    w = build_wedge("tetrahedral")
    s = init_disk_in_wedge(w, 4)
    assert len(s.meta["corners"]) == 4
    assert right_corners(s, w) == 3
    assert s.constraint_violation() <= 1e-12
    assert np.all(w.contains(s.vertices, tol=1e-9))
    assert s.mesh().euler_characteristic() == 1


def test_icosahedral_32_init_pattern():
    w = build_wedge("icosahedral")
    s = init_disk_in_wedge(w, 32)
    assert len(s.meta["corners"]) == 5
    assert right_corners(s, w) == 5
    assert s.mesh().euler_characteristic() == 1


def test_constraint_tags():
    s = init_disk_in_wedge(build_wedge("octahedral"), 6)
    tags = set(s.constraint_tags())
    assert {"free", "on-sphere"} <= tags
    assert any(t.startswith("on-edge") for t in tags)
    assert any(t.startswith("on-circle") for t in tags)


def test_half_disk_stays_fixed():
    s = half_disk_state(12)
    out = evolve(s, max_steps=50)
    assert out.steps == 0
    assert out.area == s.area
    assert np.array_equal(out.vertices, s.vertices)
    # inscribed polygon area of the half disk
    n = 2 * 12
    assert s.area == pytest.approx(0.5 * n * np.sin(np.pi / n), rel=1e-12)


def test_descent_is_monotone_and_respects_constraints():
    s = init_disk_in_wedge(build_wedge("tetrahedral"), 4, resolution=6)
    out = evolve(s, max_steps=40, grad_tol=0.0)
    h = np.array(out.history)
    assert out.steps > 0 and h[-1] < h[0]
    assert np.all(np.diff(h) <= 0)
    assert out.constraint_violation() <= 1e-12
    # tighter tolerance continues from there without raising the area
    more = evolve(out, max_steps=20, grad_tol=0.0)
    assert more.area <= out.area


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(0)
    s = init_disk_in_wedge(build_wedge("octahedral"), 8, resolution=3)
    X, T = s.vertices + 0.01 * rng.normal(size=s.vertices.shape), s.triangles
    H = area_hessian(X, T).toarray()
    v = rng.normal(size=X.size)
    h = 1e-6
    gp = area_gradient(X + h * v.reshape(-1, 3), T)[1].ravel()
    gm = area_gradient(X - h * v.reshape(-1, 3), T)[1].ravel()
    assert np.allclose(H @ v, (gp - gm) / (2 * h), atol=1e-7)
    assert np.allclose(H, H.T, atol=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(3, 3))
    T = np.array([[0, 1, 2]])
    A, G = area_gradient(X, T)
    assert A == pytest.approx(0.5 * np.linalg.norm(np.cross(X[1] - X[0], X[2] - X[0])))
    h = 1e-7
    for i in range(3):
        for j in range(3):
            E = np.zeros_like(X)
            E[i, j] = h
            fd = (area_gradient(X + E, T)[0] - area_gradient(X - E, T)[0]) / (2 * h)
            assert G[i, j] == pytest.approx(fd, abs=1e-7)


def test_critical_solver_recovers_perturbed_half_disk():
    s = half_disk_state(8)
    rng = np.random.default_rng(3)
    s.vertices = s.vertices + np.column_stack([np.zeros((s.n_vertices, 2)),
                                               0.02 * rng.normal(size=s.n_vertices)])
    from stekhom.fbms import project
    s.vertices = project(s, s.vertices)
    out = solve_critical(s, "full", tol=1e-10)
    assert out.meta["converged"]
    assert out.area == pytest.approx(half_disk_state(8).area, rel=1e-8)


def test_refine_keeps_constraints():
    s = init_disk_in_wedge(build_wedge("tetrahedral"), 4, resolution=4)
    r = refine(s)
    assert r.n_vertices > s.n_vertices and len(r.triangles) == 4 * len(s.triangles)
    assert r.constraint_violation() <= 1e-12
    assert r.mesh().euler_characteristic() == 1


def test_equatorial_disk_diagnostics():
    d = fbms_diagnostics(embed_planar(build_disk_mesh(1.0, 40)))
    assert d["area"] == pytest.approx(np.pi, rel=5e-3)
    assert d["boundary_length"] == pytest.approx(2 * np.pi, rel=5e-3)
    assert d["sigma1"] == pytest.approx(1.0, rel=0.01)
    assert d["Sigma1"] == pytest.approx(2 * np.pi, rel=0.01)
    assert d["ratio_defect"] < 0.01
    # x and y are Steklov eigenfunctions with sigma 1; z vanishes identically
    assert d["coordinate_rayleigh"][0] == pytest.approx(1.0, rel=0.01)
    assert d["coordinate_rayleigh"][1] == pytest.approx(1.0, rel=0.01)


@pytest.fixture(scope="module")
def tetra():
    return run_fbms("tetrahedral", 4)


def test_tetrahedral_table_row(tetra):
    d = tetra.diagnostics
    area, Sigma = REFERENCE_SURFACES[("tetrahedral", 4)]
    assert d["area_over_pi"] == pytest.approx(area, rel=0.02)
    assert d["Sigma1_over_pi"] == pytest.approx(Sigma, rel=0.02)
    assert d["sigma1"] == pytest.approx(1.0, rel=0.02)
    assert d["Sigma1"] > 4 * np.pi
    assert d["Sigma1"] <= 8 * np.pi
    assert tetra.verdict == "pass"


def test_tetrahedral_topology_and_symmetry(tetra):
    surf = tetra.surface
    surf.validate()
    assert len(surf.boundary_loops) == 4
    assert surf.euler_characteristic() == 2 - 4
    assert np.allclose(np.linalg.norm(surf.vertices[np.concatenate(surf.boundary_loops)], axis=1),
                       1.0, atol=1e-12)
    assert symmetry_defect(surf, build_group("tetrahedral")) <= 1e-9
    # fundamental disk carries 1/24 of the area
    assert tetra.state.area * 24 == pytest.approx(tetra.diagnostics["area"], rel=1e-10)


def test_octahedral_eight_loops():
    res = run_fbms("octahedral", 8, rounds=2)
    assert len(res.surface.boundary_loops) == 8
    assert res.surface.euler_characteristic() == -6
    assert res.diagnostics["Sigma1"] > 4 * np.pi


def test_reflection_of_unconverged_disk_still_welds():
    s = init_disk_in_wedge(build_wedge("octahedral"), 6, resolution=4)
    surf = reflect_to_full_surface(s, build_group("octahedral"))
    surf.validate()
    assert len(surf.boundary_loops) == 6
