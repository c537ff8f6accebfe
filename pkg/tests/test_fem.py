import numpy as np
import pytest
import scipy.sparse as sp

from stekhom.expr import parse_weight
from stekhom.fem import (SolverError, assemble_boundary_mass, assemble_mass, assemble_stiffness,
                         laplace_spectrum, rayleigh_quotient, solve_generalized_eigs,
                         steklov_spectrum)
from stekhom.mesh import (MeshError, SurfaceModel, TriMesh, Weight, build_disk_mesh,
                          build_flat_torus_mesh, build_sphere_mesh)


def test_right_triangle_stiffness():
    m = TriMesh(np.array([[0, 0], [1, 0], [0, 1]], float), [[0, 1, 2]])
    K = assemble_stiffness(m).toarray()
    expect = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert np.allclose(K, expect, atol=1e-15)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-15)


def test_stiffness_kernel_and_psd(sphere):
    m = build_sphere_mesh(sphere, 3)
    K = assemble_stiffness(m)
    assert np.linalg.norm(K @ np.ones(m.n_vertices)) <= 1e-12
    rng = np.random.default_rng(0)
    V = rng.normal(size=(100, m.n_vertices))
    assert np.all(np.einsum("ij,ij->i", V, (K @ V.T).T) >= -1e-12)
    assert abs(K - K.T).max() == 0


def test_mass_matrix(torus):
    m = build_flat_torus_mesh(torus, 0.05)
    one = np.ones(m.n_vertices)
    M1 = assemble_mass(m, Weight.const(1.0))
    assert one @ M1 @ one == pytest.approx(1.0, abs=1e-10)
    M2 = assemble_mass(m, Weight.const(2.0))
    assert abs(M2 - 2 * M1).max() == 0
    Mw = assemble_mass(m, parse_weight("1 + 0.5*sin(2*pi*x)"), torus)
    assert one @ Mw @ one == pytest.approx(1.0, abs=1e-6)


def test_boundary_mass_disk():
    m = build_disk_mesh(1.0, 20)
    B = assemble_boundary_mass(m)
    n = 120
    one = np.ones(m.n_vertices)
    assert one @ B @ one == pytest.approx(2 * n * np.sin(np.pi / n), rel=1e-12)
    interior = np.setdiff1d(np.arange(m.n_vertices), m.boundary_loops[0])
    assert B[interior].nnz == 0


def test_boundary_mass_blocks_follow_loops(sphere):
    from stekhom.homogenize import ExperimentConfig, build_domain
    dom, _, _ = build_domain(sphere, Weight.const(1.0), 0.6, ExperimentConfig())
    B = assemble_boundary_mass(dom).tocoo()
    loop_of = -np.ones(dom.mesh.n_vertices, int)
    for i, l in enumerate(dom.mesh.boundary_loops):
        loop_of[l] = i
    assert np.all(loop_of[B.row] >= 0)
    assert np.array_equal(loop_of[B.row], loop_of[B.col])


def test_closed_mesh_has_no_boundary_mass(sphere):
    with pytest.raises(MeshError):
        assemble_boundary_mass(build_sphere_mesh(sphere, 1))


def test_disk_steklov_oracle():
    res = steklov_spectrum(build_disk_mesh(1.0, 60), count=4)
    assert res.eigenvalues[0] == 0.0
    assert np.allclose(res.eigenvalues[1:], [1, 1, 2, 2], rtol=0.01)
    assert res.residuals.max() <= 1e-8
    assert res.harmonicity_defects[1:].max() < 1e-8


def test_torus_laplace_oracle(torus):
    res = laplace_spectrum(build_flat_torus_mesh(torus, 0.01), count=4)
    assert np.allclose(res.eigenvalues[1:], 4 * np.pi**2, rtol=0.01)


def test_sphere_laplace_oracle(sphere):
    res = laplace_spectrum(build_sphere_mesh(sphere, 5), count=4, model=sphere)
    assert np.allclose(res.eigenvalues[1:4], 2.0, rtol=0.01)
    assert res.eigenvalues[4] == pytest.approx(6.0, rel=0.01)


def test_b_orthonormal_and_ordered(sphere):
    m = build_sphere_mesh(sphere, 4)
    K, M = assemble_stiffness(m), assemble_mass(m)
    tol = 1e-8
    res = solve_generalized_eigs(K, M, 8, tol)
    V = res.eigenvectors
    G = V @ (M @ V.T)
    assert np.abs(G - np.eye(len(V))).max() <= 10 * tol
    assert np.all(np.diff(res.eigenvalues) >= -1e-12) and res.eigenvalues.min() >= 0
    for lam, v in zip(res.eigenvalues[1:], V[1:]):
        assert rayleigh_quotient(K, M, v) == pytest.approx(lam, rel=1e-8)


def test_refinement_does_not_raise_lambda1(torus):
    # nested P1 spaces: the structured grids at h and h/2 share vertices
    l1 = [laplace_spectrum(build_flat_torus_mesh(torus, h), count=2).eigenvalues[1]
          for h in (0.1, 0.05)]
    assert l1[1] <= l1[0] * (1 + 1e-7)


def test_solver_errors():
    m = build_disk_mesh(1.0, 2)
    K, B = assemble_stiffness(m), assemble_boundary_mass(m)
    with pytest.raises(SolverError):
        solve_generalized_eigs(K, B, 50)
    with pytest.raises(SolverError):
        solve_generalized_eigs(K, sp.csr_matrix(K.shape), 2)
    # two disconnected copies: constants are not the only kernel
    K2 = sp.block_diag([K, K]).tocsr()
    B2 = sp.block_diag([B, B]).tocsr()
    with pytest.raises(SolverError):
        solve_generalized_eigs(K2, B2, 2)


def test_spectral_result_serialisation(tmp_path):
    res = steklov_spectrum(build_disk_mesh(1.0, 10), count=2)
    import json
    d = json.loads(res.to_json())
    assert d["problem"] == res.problem and len(d["eigenvalues"]) == 3
    arr = np.load(res.write_eigenvectors(tmp_path / "v.npy"))
    assert arr.dtype == np.dtype("<f8") and arr.shape == res.eigenvectors.shape


def test_equilateral_torus_normalised():
    from stekhom.homogenize import normalized_laplace
    t = SurfaceModel.equilateral_torus()
    m = build_flat_torus_mesh(t, 0.01)
    res = laplace_spectrum(m, count=6, model=t)
    assert normalized_laplace(m, res)[1] == pytest.approx(8 * np.pi**2 / np.sqrt(3), rel=0.01)
