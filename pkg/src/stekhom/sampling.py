"""Maximal ε-separated point sets and their geodesic Voronoi cells."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .mesh import SurfaceModel, TriMesh

DEFAULT_CANDIDATE_BUDGET = 4_000_000
GRID_FACTOR = 10  # candidate spacing is at most epsilon / GRID_FACTOR
_HEX_NN = 2.6935  # nearest-neighbour spacing of N Fibonacci points is ~ 2.69 R / sqrt(N)


class SamplingError(ValueError):
    pass


@dataclass
class SeparatedSet:
    epsilon: float
    points: np.ndarray
    seed: int
    model: SurfaceModel
    grid_spacing: float = 0.0
    n_candidates: int = 0
    audit_max_distance: float = 0.0

    def __len__(self) -> int:
        return len(self.points)

    def to_json(self) -> str:
        return json.dumps({
            "epsilon": self.epsilon,
            "seed": self.seed,
            "model": self.model.describe(),
            "grid_spacing": self.grid_spacing,
            "n_candidates": self.n_candidates,
            "audit_max_distance": self.audit_max_distance,
            "points": self.points.tolist(),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SeparatedSet":
        d = json.loads(text)
        return cls(d["epsilon"], np.array(d["points"], dtype=float), d["seed"],
                   SurfaceModel.from_description(d["model"]), d.get("grid_spacing", 0.0),
                   d.get("n_candidates", 0), d.get("audit_max_distance", 0.0))


def candidate_grid(model: SurfaceModel, spacing: float) -> np.ndarray:
    """Dense candidate points with neighbour spacing at most ``spacing``."""
    if model.is_torus:
        norms = np.linalg.norm(model.lattice, axis=0)
        n1, n2 = (int(np.ceil(n / spacing)) for n in norms)
        i, j = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
        return np.column_stack([i.ravel(), j.ravel()]) @ model.lattice.T
    n = int(np.ceil((_HEX_NN * model.radius / spacing) ** 2))
    return model.radius * fibonacci_sphere(n)


def fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    phi = np.pi * (3 - np.sqrt(5)) * k
    s = np.sqrt(1 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def _candidate_count(model: SurfaceModel, spacing: float) -> int:
    if model.is_torus:
        norms = np.linalg.norm(model.lattice, axis=0)
        return int(np.prod(np.ceil(norms / spacing)))
    return int(np.ceil((_HEX_NN * model.radius / spacing) ** 2))


def maximal_separated_set(model: SurfaceModel, epsilon: float, seed: int = 0,
                          budget: int = DEFAULT_CANDIDATE_BUDGET,
                          backend: Optional[str] = None) -> SeparatedSet:
    """Greedy ε-separated set over a shuffled candidate grid.

    A candidate is accepted iff its geodesic distance to every accepted point
    is at least ``epsilon``; rejected candidates are therefore within
    ``epsilon`` of the set, which makes the result maximal on the grid.
    """
    if not 0 < epsilon < model.injectivity_scale:
        raise SamplingError(f"epsilon={epsilon} must lie in (0, {model.injectivity_scale:.4g})")
    spacing = epsilon / GRID_FACTOR
    count = _candidate_count(model, spacing)
    if count > budget:
        eps_min = epsilon * np.sqrt(count / budget)
        raise SamplingError(f"epsilon={epsilon} needs {count} candidates (budget {budget}); "
                            f"use epsilon >= {eps_min:.4g} or raise the budget")
    cand = candidate_grid(model, spacing)
    order = np.random.default_rng(seed).permutation(len(cand))
    if model.is_torus:
        acc = kernels.greedy_cover(cand, order, epsilon, model.lattice, backend=backend)
        pts = cand[acc]
    else:
        unit = cand / model.radius
        acc = kernels.greedy_cover(unit, order, epsilon / model.radius, backend=backend)
        pts = cand[acc]
    sset = SeparatedSet(float(epsilon), pts, int(seed), model, spacing, len(cand))
    sset.audit_max_distance = float(audit_distances(sset, cand).max())
    return sset


def audit_distances(sset: SeparatedSet, audit: np.ndarray) -> np.ndarray:
    """Geodesic distance from every audit point to the nearest set member."""
    model = sset.model
    if model.is_torus:
        _, d2 = kernels.nearest_center(audit, sset.points, model.lattice)
        return np.sqrt(d2)
    _, dots = kernels.nearest_center(audit / model.radius, sset.points / model.radius)
    return model.radius * np.arccos(np.clip(dots, -1.0, 1.0))


def pairwise_min_distance(sset: SeparatedSet) -> float:
    p = sset.points
    if len(p) < 2:
        return np.inf
    d = sset.model.geodesic_distance(p[:, None, :], p[None, :, :])
    d[np.diag_indices(len(p))] = np.inf
    return float(d.min())


# ---------------------------------------------------------------------------
# Voronoi cells by quadrature

@dataclass
class VoronoiCell:
    center: np.ndarray
    area: float
    triangles: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fractions: np.ndarray = field(default_factory=lambda: np.zeros(0))
    max_distance: float = 0.0

    @property
    def triangle_fractions(self) -> dict:
        return dict(zip(self.triangles.tolist(), self.fractions.tolist()))


def _sub_centroids(n: int) -> np.ndarray:
    """Barycentric centroids of the n*n congruent sub-triangles of a triangle."""
    out = []
    for i in range(n):
        for j in range(n - i):
            a = np.array([i, j])
            out.append(((a + [1 / 3, 1 / 3]) / n))
            if i + j < n - 1:
                out.append(((a + [2 / 3, 2 / 3]) / n))
    b = np.array(out)
    return np.column_stack([1 - b.sum(1), b])


SPLIT_SAMPLES = _sub_centroids(4)  # 16 samples
_PROBE = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [1 / 3, 1 / 3, 1 / 3]])


def model_triangle_areas(model: SurfaceModel, mesh: TriMesh) -> np.ndarray:
    """Exact model area of each mesh triangle (spherical triangles on the sphere)."""
    if model.is_torus:
        return mesh.triangle_areas()
    u = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    a, b, c = (u[mesh.triangles[:, k]] for k in range(3))
    num = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = 1 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2 * np.arctan2(num, den) * model.radius**2


def _assign(model: SurfaceModel, pts: np.ndarray, centers: np.ndarray, backend=None):
    if model.is_torus:
        idx, d2 = kernels.nearest_center(pts, centers, model.lattice, backend=backend)
        return idx, np.sqrt(d2)
    unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    idx, dots = kernels.nearest_center(unit, centers / model.radius, backend=backend)
    return idx, model.radius * np.arccos(np.clip(dots, -1.0, 1.0))


def voronoi_partition(model: SurfaceModel, sset: SeparatedSet, mesh: TriMesh,
                      backend: Optional[str] = None) -> list[VoronoiCell]:
    """Geodesic Voronoi cells of ``sset`` by quadrature on ``mesh``.

    Triangles whose corners and centroid share a nearest center go to that
    center whole; the others are split into 16 samples.  Cell areas sum the
    exact model areas of the triangles, so they partition the model area.
    """
    h = float(mesh.edge_lengths().max())
    if h > sset.epsilon / 4:
        raise SamplingError(f"mesh edge {h:.4g} is coarser than epsilon/4 = {sset.epsilon / 4:.4g}")
    centers = sset.points
    nt = mesh.n_triangles
    areas = model_triangle_areas(model, mesh)

    probe = mesh.triangle_points(_PROBE)
    pidx, pdist = _assign(model, probe.reshape(-1, probe.shape[-1]), centers, backend)
    pidx = pidx.reshape(nt, 4)
    pdist = pdist.reshape(nt, 4)
    whole = np.all(pidx == pidx[:, :1], axis=1)

    tri_ids = [np.flatnonzero(whole)]
    owners = [pidx[whole, 0]]
    fracs = [np.ones(int(whole.sum()))]
    maxd = np.zeros(len(centers))
    np.maximum.at(maxd, pidx[whole, 0], pdist[whole].max(axis=1))

    split = np.flatnonzero(~whole)
    if split.size:
        sub = TriMesh(mesh.vertices, mesh.triangles[split], boundary_loops=[],
                      lattice=mesh.lattice)
        spts = sub.triangle_points(SPLIT_SAMPLES)
        ns = len(SPLIT_SAMPLES)
        sidx, sdist = _assign(model, spts.reshape(-1, spts.shape[-1]), centers, backend)
        np.maximum.at(maxd, sidx, sdist)
        tri_rep = np.repeat(split, ns)
        key = tri_rep * len(centers) + sidx
        ukey, counts = np.unique(key, return_counts=True)
        tri_ids.append(ukey // len(centers))
        owners.append(ukey % len(centers))
        fracs.append(counts / ns)

    tri_ids = np.concatenate(tri_ids)
    owners = np.concatenate(owners)
    fracs = np.concatenate(fracs)
    order = np.lexsort((tri_ids, owners))
    tri_ids, owners, fracs = tri_ids[order], owners[order], fracs[order]
    cell_area = np.bincount(owners, weights=fracs * areas[tri_ids], minlength=len(centers))
    bounds = np.searchsorted(owners, np.arange(len(centers) + 1))
    cells = []
    for p in range(len(centers)):
        s, e = bounds[p], bounds[p + 1]
        cells.append(VoronoiCell(centers[p].copy(), float(cell_area[p]), tri_ids[s:e], fracs[s:e],
                                 float(maxd[p])))
    return cells


def certify_inner_balls(model: SurfaceModel, sset: SeparatedSet, mesh: TriMesh,
                        radius_factor: float = 0.5) -> bool:
    """True iff every quadrature sample within ``radius_factor * eps`` of a center
    is assigned to that center."""
    pts = mesh.triangle_points(SPLIT_SAMPLES).reshape(-1, model.chart_dim)
    owner, _ = _assign(model, pts, sset.points)
    r = radius_factor * sset.epsilon
    if model.is_torus:
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]) @ model.lattice.T
        reps = (sset.points[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
        ids = np.tile(np.arange(len(sset.points)), len(shifts))
        tree = cKDTree(reps)
        hits = tree.query_ball_point(pts, r * (1 - 1e-12))
    else:
        unit = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        ids = np.arange(len(sset.points))
        tree = cKDTree(sset.points / model.radius)
        hits = tree.query_ball_point(unit, 2 * np.sin(r / model.radius / 2) * (1 - 1e-12))
    for k, h in enumerate(hits):
        for c in h:
            if ids[c] != owner[k]:
                return False
    return True


def write_cells_csv(path, cells: list[VoronoiCell], radii: Optional[np.ndarray] = None) -> Path:
    """CSV columns: center_id, coordinates (x, y[, z]), area[, radius]."""
    path = Path(path)
    dim = len(cells[0].center) if cells else 2
    coords = ["x", "y", "z"][:dim]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center_id", *coords, "area"] + (["radius"] if radii is not None else []))
        for i, c in enumerate(cells):
            row = [i, *[repr(float(x)) for x in c.center], repr(c.area)]
            if radii is not None:
                row.append(repr(float(radii[i])))
            w.writerow(row)
    return path
