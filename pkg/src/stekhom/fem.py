"""P1 finite elements for the Steklov and weighted Laplace eigenproblems.

Both problems are pencils ``K v = lambda B v`` with ``K`` the stiffness
matrix (kernel: the constants on a connected mesh) and ``B`` either the
weighted area mass (Laplace) or the boundary-edge mass (Steklov, singular).
The solver uses shift-invert Lanczos at shift 0 with the constant mode
deflated explicitly: the pinned stiffness is factorised once and every
application projects the right-hand side and the solution onto the
B-orthogonal complement of the constants.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .mesh import MeshError, SurfaceModel, TriMesh, Weight

logger = logging.getLogger(__name__)

STEKLOV = "Steklov"
WEIGHTED_LAPLACE = "WeightedLaplace"
DEFAULT_TOL = 1e-8
DEFAULT_BUDGET = 10_000


class SolverError(RuntimeError):
    """Raised when the eigensolver cannot deliver the requested pairs."""

    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = None if residuals is None else list(map(float, residuals))


def _triangle_geometry(mesh: TriMesh):
    e1, e2 = mesh.triangle_edges()
    if e1.shape[1] == 2:
        e1 = np.column_stack([e1, np.zeros(len(e1))])
        e2 = np.column_stack([e2, np.zeros(len(e2))])
    area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    return e1, e2, area


def _check_areas(area: np.ndarray) -> None:
    bad = np.flatnonzero(area < 1e-14 * area.mean())
    if bad.size:
        raise MeshError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})")


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """P1 stiffness ``K_ij = ∫ ∇φ_i·∇φ_j`` (the cotangent Laplacian)."""
    e1, e2, area = _triangle_geometry(mesh)
    _check_areas(area)
    # edge vectors opposite each local vertex
    opp = [e2 - e1, -e2, e1]
    t = mesh.triangles
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(np.einsum("ij,ij->i", opp[i], opp[j]) / (4 * area))
    n = mesh.n_vertices
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def _midpoints(mesh: TriMesh, model: Optional[SurfaceModel]) -> np.ndarray:
    """Edge midpoints per triangle, the one opposite local vertex k in column k."""
    bary = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    pts = mesh.triangle_points(bary)
    if model is not None and not model.is_torus:
        pts = model.radius * pts / np.linalg.norm(pts, axis=2, keepdims=True)
    return pts


def assemble_mass(mesh: TriMesh, weight: Optional[Weight] = None,
                  model: Optional[SurfaceModel] = None) -> sp.csr_matrix:
    """Consistent P1 mass for ``β dμ`` with β sampled at the edge midpoints."""
    _, _, area = _triangle_geometry(mesh)
    _check_areas(area)
    t = mesh.triangles
    if weight is None or weight.is_constant:
        c = 1.0 if weight is None else weight.constant
        beta = np.full((len(t), 3), c)
    else:
        mid = _midpoints(mesh, model)
        beta = weight(mid.reshape(-1, mid.shape[-1])).reshape(len(t), 3)
    rows, cols, vals = [], [], []
    w = area / 12.0
    for i in range(3):
        for j in range(3):
            if i == j:
                v = w * (beta.sum(axis=1) - beta[:, i])
            else:
                v = w * beta[:, 3 - i - j]
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(v)
    n = mesh.n_vertices
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    M.sum_duplicates()
    return M


def assemble_boundary_mass(mesh_or_domain) -> sp.csr_matrix:
    """1D P1 mass on the boundary edges; zero rows for interior vertices."""
    mesh = getattr(mesh_or_domain, "mesh", mesh_or_domain)
    be = mesh.boundary_edges()
    if len(be) == 0:
        raise MeshError("mesh is closed; there is no boundary to carry a boundary mass")
    L = np.linalg.norm(mesh.edge_vector(be[:, 0], be[:, 1]), axis=1)
    a, b = be[:, 0], be[:, 1]
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    n = mesh.n_vertices
    B = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    B.sum_duplicates()
    return B


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (count + 1, n), B-orthonormal rows
    residuals: np.ndarray
    problem: str
    normalisation: str = "B-orthonormal"
    mesh_checksum: str = ""
    harmonicity_defects: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "problem": self.problem,
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residuals": [float(x) for x in self.residuals],
            "normalisation": self.normalisation,
            "mesh_checksum": self.mesh_checksum,
        }
        if self.harmonicity_defects is not None:
            out["harmonicity_defects"] = [float(x) for x in self.harmonicity_defects]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def write_eigenvectors(self, path) -> Path:
        """Eigenvectors as a ``.npy`` array of little-endian float64, shape (pairs, vertices)."""
        path = Path(path)
        np.save(path, np.ascontiguousarray(self.eigenvectors, dtype="<f8"))
        return path


def _connected(K: sp.spmatrix) -> bool:
    from scipy.sparse.csgraph import connected_components
    return connected_components(K, directed=False)[0] == 1


def solve_generalized_eigs(K: sp.spmatrix, B: sp.spmatrix, count: int,
                           tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET,
                           problem: str = "", v0: Optional[np.ndarray] = None) -> SpectralResult:
    """Smallest ``count`` nonzero eigenpairs of ``K v = λ B v`` plus the trivial pair.

    ``B`` may be singular (Steklov); the pairs live on the subspace where it is
    a norm.  Raises :class:`SolverError` if a residual exceeds ``tol``.
    """
    K = sp.csr_matrix(K)
    B = sp.csr_matrix(B)
    n = K.shape[0]
    one = np.ones(n)
    B1 = B @ one
    mass = float(one @ B1)
    if not mass > 0:
        raise SolverError("B has no mass on the constants")
    rank = int(np.count_nonzero(np.abs(B).sum(axis=1)))
    if count < 1 or count >= min(rank, n) - 1:
        raise SolverError(f"count={count} exceeds the available nontrivial spectrum "
                          f"({min(rank, n) - 2} pairs)")
    if not _connected(K):
        raise SolverError("stiffness graph is disconnected; constants are not the only kernel")

    lu = splu(sp.csc_matrix(K[1:, 1:]), permc_spec="COLAMD")
    applications = [0]

    def opinv(r):
        r = np.asarray(r).ravel()
        r = r - (r.sum() / mass) * B1
        x = np.empty(n)
        x[0] = 0.0
        x[1:] = lu.solve(r[1:])
        applications[0] += 1
        return x - (B1 @ x / mass) * one

    op = LinearOperator((n, n), matvec=opinv, dtype=float)
    if v0 is None:
        # fixed start vector: ARPACK's own default is not reproducible across calls
        v0 = np.random.default_rng(12345).standard_normal(n)
    ncv = min(n - 1, max(2 * count + 1, count + 20))
    try:
        vals, vecs = eigsh(K, k=count, M=B, sigma=0.0, which="LM", OPinv=op, ncv=ncv,
                           tol=tol * 1e-3, maxiter=max(1, budget // ncv), v0=v0)
    except ArpackNoConvergence as exc:
        raise SolverError(f"Lanczos did not converge within {budget} applications",
                          getattr(exc, "eigenvalues", None)) from None
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # B-orthonormalise (degenerate clusters may come back slightly mixed)
    G = vecs.T @ (B @ vecs)
    Lc = np.linalg.cholesky(0.5 * (G + G.T))
    vecs = np.linalg.solve(Lc, vecs.T).T
    lam = np.einsum("ij,ij->j", vecs, K @ vecs)
    order = np.argsort(lam)
    lam, vecs = lam[order], vecs[:, order]
    c = one / np.sqrt(mass)
    vals = np.concatenate([[0.0], lam])
    vecs = np.column_stack([c, vecs])
    res = np.linalg.norm(K @ vecs - (B @ vecs) * vals, axis=0) / np.linalg.norm(vecs, axis=0)
    if np.any(res > tol):
        raise SolverError(f"residual {res.max():.3e} above tol {tol:.1e}", res)
    return SpectralResult(vals, vecs.T.copy(), res, problem,
                          info={"applications": applications[0], "ncv": ncv})


def steklov_spectrum(domain, count: int = 6, tol: float = DEFAULT_TOL,
                     budget: int = DEFAULT_BUDGET) -> SpectralResult:
    """Steklov eigenpairs of a perforated domain or any mesh with boundary."""
    mesh = getattr(domain, "mesh", domain)
    K = assemble_stiffness(mesh)
    B = assemble_boundary_mass(mesh)
    res = solve_generalized_eigs(K, B, count, tol, budget, problem=STEKLOV)
    res.mesh_checksum = mesh.checksum()
    interior = np.ones(mesh.n_vertices, dtype=bool)
    interior[np.concatenate(mesh.boundary_loops)] = False
    defects = []
    for v in res.eigenvectors:
        Kv = K @ v
        nrm = np.linalg.norm(Kv)
        defects.append(0.0 if nrm == 0 else float(np.abs(Kv[interior]).max(initial=0.0) / nrm))
    res.harmonicity_defects = np.array(defects)
    return res


def laplace_spectrum(mesh: TriMesh, weight: Optional[Weight] = None, count: int = 6,
                     tol: float = DEFAULT_TOL, model: Optional[SurfaceModel] = None,
                     budget: int = DEFAULT_BUDGET) -> SpectralResult:
    """Weighted Laplace eigenpairs ``-Δφ = λ β φ`` on a closed mesh."""
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh, weight, model)
    res = solve_generalized_eigs(K, M, count, tol, budget, problem=WEIGHTED_LAPLACE)
    res.mesh_checksum = mesh.checksum()
    res.info["weight"] = "1.0" if weight is None else weight.descriptor
    res.info["constant_weight"] = weight is None or weight.is_constant
    return res


def rayleigh_quotient(K: sp.spmatrix, B: sp.spmatrix, v: np.ndarray) -> float:
    return float(v @ (K @ v)) / float(v @ (B @ v))
