"""Hole radii from the perimeter/volume balance and carving of the perforated domain.

Every hole is resolved by concentric geodesic rings around its center: the
innermost ring has exactly the prescribed radius and becomes the hole
boundary, and the outer rings grade the spacing up to the background mesh.
The point cloud is triangulated by Delaunay (periodic chart, with a
strip of periodic copies around the unit cell) or by the convex hull (sphere); each center is kept during
triangulation so that its ring is fanned, then the fan is deleted.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from .mesh import (MeshError, SurfaceModel, TriMesh, Weight, build_flat_torus_mesh, build_sphere_mesh,
                   sphere_level_for_spacing, write_off)
from .sampling import SeparatedSet, model_triangle_areas

logger = logging.getLogger(__name__)

MIN_BOUNDARY_SEGMENTS = 16


class PerforationError(ValueError):
    pass


def hole_radius(model: SurfaceModel, center, cell_area: float, weight: Weight,
                epsilon: Optional[float] = None) -> float:
    """Radius whose geodesic circle has length ``weight(center) * cell_area``."""
    if not cell_area > 0:
        raise PerforationError("cell_area must be positive")
    length = float(weight(np.atleast_2d(center))[0]) * cell_area
    if model.is_torus:
        r = length / (2 * np.pi)
    else:
        R = model.radius
        s = length / (2 * np.pi * R)
        if s >= 1:
            raise PerforationError(f"boundary length {length:.4g} exceeds the longest circle "
                                   f"on the sphere ({2 * np.pi * R:.4g}); no hole radius exists")
        r = R * np.arcsin(s)
    if epsilon is not None and r >= epsilon / 2:
        raise PerforationError(f"hole radius {r:.4g} reaches epsilon/2 = {epsilon / 2:.4g}; "
                               "the hole would leave its cell")
    return float(r)


@dataclass
class PerforationConfig:
    boundary_segments: int = MIN_BOUNDARY_SEGMENTS
    segments_per_inverse_eps: float = 3.2  # hole resolution grows like this * sqrt(area) / epsilon
    grading: float = 0.35  # relative growth of ring spacing
    zone_fraction: float = 1 / 3  # graded zone radius as a fraction of epsilon
    background_jitter: float = 0.02  # fraction of background spacing
    jitter_seed: int = 12345

    def segments_for(self, epsilon: float, length_scale: float = 1.0) -> int:
        return max(int(self.boundary_segments),
                   int(np.ceil(self.segments_per_inverse_eps * length_scale / epsilon)))


@dataclass
class Hole:
    center: np.ndarray
    radius: float
    loop_id: int
    cell_area: float
    weight: float
    discrete_length: float = 0.0

    @property
    def target_length(self) -> float:
        return self.weight * self.cell_area


@dataclass
class PerforatedDomain:
    mesh: TriMesh
    holes: list
    parent: SurfaceModel
    weight: Weight
    epsilon: float
    segments: int = MIN_BOUNDARY_SEGMENTS
    stats: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return np.array([h.center for h in self.holes])

    @property
    def radii(self) -> np.ndarray:
        return np.array([h.radius for h in self.holes])

    @property
    def boundary_length(self) -> float:
        return float(sum(h.discrete_length for h in self.holes))

    def hole_table(self) -> list[dict]:
        return [{"center": h.center.tolist(), "radius": h.radius, "loop_id": h.loop_id,
                 "cell_area": h.cell_area, "weight": h.weight,
                 "discrete_length": h.discrete_length,
                 "length_defect": h.discrete_length - h.target_length} for h in self.holes]

    def check_invariants(self, rtol: float = 1e-8) -> None:
        if len(self.mesh.boundary_loops) != len(self.holes):
            raise PerforationError("boundary loop count differs from hole count")
        for h in self.holes:
            loop = self.mesh.boundary_loops[h.loop_id]
            d = self.parent.geodesic_distance(self.mesh.vertices[loop], h.center)
            if np.max(np.abs(d - h.radius)) > rtol * h.radius:
                raise PerforationError(f"hole {h.loop_id} boundary is off its circle")
        c, r = self.centers, self.radii
        if len(c) > 1:
            d = self.parent.geodesic_distance(c[:, None, :], c[None, :, :])
            gap = d - (r[:, None] + r[None, :])
            gap[np.diag_indices(len(c))] = np.inf
            if gap.min() <= 0:
                raise PerforationError("holes overlap")

    def min_gap(self) -> float:
        c, r = self.centers, self.radii
        d = self.parent.geodesic_distance(c[:, None, :], c[None, :, :])
        gap = d - (r[:, None] + r[None, :])
        gap[np.diag_indices(len(c))] = np.inf
        return float(gap.min())

    def write(self, path) -> tuple[Path, Path]:
        extra = {"epsilon": self.epsilon, "weight": self.weight.descriptor,
                 "boundary_segments": self.segments, "holes": self.hole_table()}
        return write_off(self.mesh, path, self.parent, extra)


def background_mesh(model: SurfaceModel, epsilon: float, fraction: float = 0.25) -> TriMesh:
    """Closed uniform mesh with every edge at most ``fraction * epsilon``."""
    h = fraction * epsilon
    if model.is_torus:
        # the structured grid's diagonals are up to sqrt(2) times the target
        return build_flat_torus_mesh(model, h / 1.42)
    return build_sphere_mesh(model, sphere_level_for_spacing(h, model.radius))


def _rings(model: SurfaceModel, r: float, n0: int, zone: float, h_bg: float, grading: float):
    """Ring radii and point counts, innermost (the hole boundary) first."""
    circ = model.geodesic_circle_length
    rings = [(r, n0)]
    s = circ(r) / n0
    rho = r
    while True:
        s = min(s * (1 + grading), h_bg)
        nxt = rho + 0.866 * s
        if nxt > zone:
            break
        n = max(8, int(round(circ(nxt) / s)))
        rings.append((nxt, n))
        rho = nxt
    return rings


def _ring_points(model: SurfaceModel, center, rings) -> list[np.ndarray]:
    # irrational phase steps: no two rings share a mirror axis, so no cocircular
    # trapezoids for the Delaunay step to split inconsistently
    golden = (np.sqrt(5) - 1) / 2
    return [model.geodesic_circle(center, rho, n, phase=2 * np.pi * ((k * golden) % 1) / n)
            for k, (rho, n) in enumerate(rings)]


def perforate(mesh: TriMesh, sset: SeparatedSet, radii: Sequence[float], weight: Weight,
              cell_areas: Optional[Sequence[float]] = None,
              config: Optional[PerforationConfig] = None) -> PerforatedDomain:
    """Carve a geodesic hole of radius ``radii[i]`` around every point of ``sset``.

    ``mesh`` is the closed background mesh; its vertices outside the graded
    zones around the holes are kept.
    """
    config = config or PerforationConfig()
    model = sset.model
    centers = np.asarray(sset.points, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if len(centers) == 0:
        raise PerforationError("no holes to carve: the separated set is empty")
    if len(radii) != len(centers):
        raise PerforationError("one radius per center is required")
    eps = sset.epsilon
    n0 = config.segments_for(eps, np.sqrt(model.area))
    h_bg = float(mesh.edge_lengths().max())
    zone = config.zone_fraction * eps
    if radii.max() >= zone:
        raise PerforationError(f"hole radius {radii.max():.4g} exceeds the refinement zone "
                               f"{zone:.4g}; holes too large for this epsilon")

    ring_sets = [_rings(model, r, n0, zone, h_bg, config.grading) for r in radii]
    outer = np.array([rs[-1][0] for rs in ring_sets])
    if len(centers) > 1:
        d = model.geodesic_distance(centers[:, None, :], centers[None, :, :])
        gap = d - outer[:, None] - outer[None, :]
        gap[np.diag_indices(len(centers))] = np.inf
        if gap.min() < 0.5 * h_bg:
            i, j = np.unravel_index(np.argmin(gap), gap.shape)
            raise PerforationError(f"refinement zones of holes {i} and {j} overlap")

    # background vertices outside every zone
    bg = mesh.vertices
    if model.is_torus:
        rng = np.random.default_rng(config.jitter_seed)
        bg = model.wrap(bg + config.background_jitter * h_bg * rng.uniform(-1, 1, bg.shape))
    keep = np.ones(len(bg), dtype=bool)
    for c, rho in zip(centers, outer):
        keep &= model.geodesic_distance(bg, c) > rho + 0.5 * h_bg
    bg = bg[keep]

    pts = [bg]
    tags = [np.full(len(bg), -1)]
    ring0_index = []
    center_index = []
    start = len(bg)
    for hid, (c, rings) in enumerate(zip(centers, ring_sets)):
        center_index.append(start)
        pts.append(np.atleast_2d(c))
        tags.append(np.array([-2]))
        start += 1
        rp = _ring_points(model, c, rings)
        ring0_index.append(np.arange(start, start + len(rp[0])))
        for k, ring in enumerate(rp):
            pts.append(ring)
            tags.append(np.full(len(ring), hid if k == 0 else -1))
            start += len(ring)
    pts = np.concatenate(pts)
    tags = np.concatenate(tags)

    if model.is_torus:
        tris = _periodic_delaunay(pts, model.lattice, 4 * h_bg)
    else:
        tris = _sphere_hull(pts / model.radius)
    is_center = np.zeros(len(pts), dtype=bool)
    is_center[center_index] = True
    tris = tris[~np.any(is_center[tris], axis=1)]
    remap = np.cumsum(~is_center) - 1
    verts = pts[~is_center]
    tags = tags[~is_center]
    tris = remap[tris]
    out = TriMesh(verts, tris, vertex_tags={"hole": tags},
                  lattice=model.lattice if model.is_torus else None)

    # order loops by hole id and check that each loop is exactly its ring
    loops = out.boundary_loops
    if len(loops) != len(centers):
        raise PerforationError(f"carving produced {len(loops)} boundary loops for "
                               f"{len(centers)} holes")
    by_hole = {}
    for loop in loops:
        hid = set(tags[loop].tolist())
        if len(hid) != 1 or -1 in hid or len(loop) != n0:
            raise PerforationError("a boundary loop is not a single hole circle")
        by_hole[hid.pop()] = loop
    out.boundary_loops = [by_hole[h] for h in range(len(centers))]
    try:
        out.validate()
    except MeshError as exc:
        raise PerforationError(f"carved mesh is invalid: {exc}") from None

    wvals = weight(centers)
    if cell_areas is None:
        # invert the hole-radius relation
        cell_areas = np.array([model.geodesic_circle_length(r) for r in radii]) / wvals
    lengths = out.loop_lengths()
    holes = [Hole(centers[i].copy(), float(radii[i]), i, float(cell_areas[i]), float(wvals[i]),
                  float(lengths[i])) for i in range(len(centers))]
    dom = PerforatedDomain(out, holes, model, weight, eps, n0)
    target = float(sum(h.target_length for h in holes))
    dom.stats = {
        "n_vertices": out.n_vertices,
        "n_triangles": out.n_triangles,
        "n_holes": len(holes),
        "boundary_segments": n0,
        "background_spacing": h_bg,
        "boundary_length": dom.boundary_length,
        "target_boundary_length": target,
        "boundary_length_defect": dom.boundary_length - target,
        "min_hole_gap": dom.min_gap() if len(holes) > 1 else float("inf"),
    }
    return dom


def _periodic_delaunay(pts: np.ndarray, lattice: np.ndarray, margin: float) -> np.ndarray:
    """Periodic Delaunay triangulation by replicating a ``margin``-wide strip."""
    u = np.linalg.solve(lattice, pts.T).T
    heights = abs(np.linalg.det(lattice)) / np.linalg.norm(lattice, axis=0)[::-1]
    mu = np.minimum(margin / heights, 0.5)
    shifts = [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    rep, ids, tiles = [], [], []
    for t, (i, j) in enumerate(shifts):
        us = u + (i, j)
        sel = np.all((us >= -mu) & (us < 1 + mu), axis=1)
        rep.append(us[sel] @ lattice.T)
        ids.append(np.flatnonzero(sel))
        tiles.append(np.full(int(sel.sum()), t))
    rep, ids, tiles = np.concatenate(rep), np.concatenate(ids), np.concatenate(tiles)
    simp = Delaunay(rep).simplices
    # one representative per periodic class: its lowest-index vertex sits in the central tile
    orig, tile = ids[simp], tiles[simp]
    lowest = np.argmin(orig, axis=1)
    simp = simp[tile[np.arange(len(simp)), lowest] == 4]
    e1 = rep[simp[:, 1]] - rep[simp[:, 0]]
    e2 = rep[simp[:, 2]] - rep[simp[:, 0]]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    simp[neg] = simp[neg][:, [0, 2, 1]]
    return ids[simp]


def _sphere_hull(unit: np.ndarray) -> np.ndarray:
    simp = ConvexHull(unit).simplices.copy()
    a, b, c = (unit[simp[:, k]] for k in range(3))
    neg = np.einsum("ij,ij->i", np.cross(b - a, c - a), a + b + c) < 0
    simp[neg] = simp[neg][:, [0, 2, 1]]
    return simp


# ---------------------------------------------------------------------------
# weak-* convergence of the boundary measure

_GAUSS3 = (np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)]), np.array([5 / 9, 8 / 9, 5 / 9]))

# degree-4 six-point rule on the reference triangle (barycentric rows, weights sum to 1)
_A, _B = 0.445948490915965, 0.091576213509771
_TRI6 = (np.array([[1 - 2 * _A, _A, _A], [_A, 1 - 2 * _A, _A], [_A, _A, 1 - 2 * _A],
                   [1 - 2 * _B, _B, _B], [_B, 1 - 2 * _B, _B], [_B, _B, 1 - 2 * _B]]),
         np.array([0.223381589678011] * 3 + [0.109951743655322] * 3))


def boundary_integral(domain: PerforatedDomain, f: Callable) -> float:
    """Integral of ``f`` over the discrete hole boundaries (3-point Gauss per edge)."""
    mesh = domain.mesh
    be = mesh.boundary_edges()
    x0 = mesh.vertices[be[:, 0]]
    d = mesh.edge_vector(be[:, 0], be[:, 1])
    length = np.linalg.norm(d, axis=1)
    xi, w = _GAUSS3
    t = 0.5 * (xi + 1)
    pts = x0[:, None, :] + t[None, :, None] * d[:, None, :]
    pts = domain.parent.wrap(pts.reshape(-1, pts.shape[-1]))
    vals = np.asarray(f(pts), dtype=float).reshape(len(be), len(t))
    return float(np.sum(0.5 * length * (vals @ w)))


def surface_integral(model: SurfaceModel, mesh: TriMesh, f: Callable) -> float:
    """Integral of ``f`` over the model using a closed reference mesh."""
    bary, w = _TRI6
    pts = mesh.triangle_points(bary)
    pts = model.wrap(pts.reshape(-1, pts.shape[-1]))
    vals = np.asarray(f(pts), dtype=float).reshape(mesh.n_triangles, len(w))
    return float(np.sum(model_triangle_areas(model, mesh) * (vals @ w)))


def weakstar_defect(domain: PerforatedDomain, test_functions: Sequence[Callable],
                    reference: TriMesh) -> list[float]:
    """|∫_{∂Ω} f dA - ∫_M f β dμ| for every test function ``f``."""
    beta = domain.weight
    out = []
    for f in test_functions:
        lhs = boundary_integral(domain, f)
        rhs = surface_integral(domain.parent, reference, lambda x, f=f: f(x) * beta(x))
        out.append(abs(lhs - rhs))
    return out


def write_hole_table(domain: PerforatedDomain, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(domain.hole_table(), indent=1))
    return path
