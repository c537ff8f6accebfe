"""Model surfaces, triangle meshes and exact geodesic distances.

Two analytic models are supported: a flat torus ``R^2 / L Z^2`` given by a
lattice matrix whose columns are the generators, and a round sphere of a
given radius.  Torus meshes live in a single periodic chart (2D coordinates
inside the fundamental parallelogram, edges measured by minimal image);
sphere meshes are embedded in R^3.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FLAT_TORUS = "flat_torus"
ROUND_SPHERE = "round_sphere"

_TRANSLATES = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


class MeshError(ValueError):
    """Raised when a mesh or model violates its invariants."""


@dataclass(frozen=True)
class SurfaceModel:
    """An analytic closed surface with closed-form geodesics.

    Use :meth:`flat_torus` or :meth:`round_sphere` to build one.
    """

    kind: str
    lattice: Optional[np.ndarray] = None
    radius: float = 1.0

    def __post_init__(self):
        if self.kind == FLAT_TORUS:
            lat = np.asarray(self.lattice, dtype=float)
            if lat.shape != (2, 2):
                raise MeshError("lattice must be a 2x2 matrix")
            det = float(np.linalg.det(lat))
            if abs(det) <= 1e-12 * max(1.0, float(np.abs(lat).max()) ** 2):
                raise MeshError(f"lattice is singular (det={det:.3e})")
            lat.setflags(write=False)
            object.__setattr__(self, "lattice", lat)
        elif self.kind == ROUND_SPHERE:
            if not self.radius > 0:
                raise MeshError("sphere radius must be positive")
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise MeshError(f"unknown surface kind {self.kind!r}")

    @classmethod
    def flat_torus(cls, lattice=((1.0, 0.0), (0.0, 1.0))) -> "SurfaceModel":
        """Flat torus; ``lattice`` columns are the generators."""
        return cls(FLAT_TORUS, lattice=np.array(lattice, dtype=float))

    @classmethod
    def equilateral_torus(cls, side: float = 1.0) -> "SurfaceModel":
        return cls.flat_torus([[side, side / 2], [0.0, side * np.sqrt(3) / 2]])

    @classmethod
    def round_sphere(cls, radius: float = 1.0) -> "SurfaceModel":
        return cls(ROUND_SPHERE, radius=radius)

    @property
    def is_torus(self) -> bool:
        return self.kind == FLAT_TORUS

    @property
    def chart_dim(self) -> int:
        return 2 if self.is_torus else 3

    @property
    def area(self) -> float:
        if self.is_torus:
            return abs(float(np.linalg.det(self.lattice)))
        return 4 * np.pi * self.radius**2

    @property
    def injectivity_scale(self) -> float:
        """Sphere: radius; torus: half the shortest lattice vector."""
        if self.is_torus:
            return 0.5 * shortest_lattice_vector(self.lattice)
        return self.radius

    def describe(self) -> dict:
        if self.is_torus:
            return {"kind": self.kind, "lattice": self.lattice.tolist()}
        return {"kind": self.kind, "radius": self.radius}

    @classmethod
    def from_description(cls, desc: dict) -> "SurfaceModel":
        if desc["kind"] == FLAT_TORUS:
            return cls.flat_torus(desc["lattice"])
        return cls.round_sphere(desc.get("radius", 1.0))

    def wrap(self, points) -> np.ndarray:
        """Map points onto the model: into the fundamental cell, or onto the sphere."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_torus:
            u = np.linalg.solve(self.lattice, pts.T).T
            u -= np.floor(u)
            u[u >= 1.0] = 0.0
            return u @ self.lattice.T
        return self.radius * pts / np.linalg.norm(pts, axis=1, keepdims=True)

    def minimal_image(self, d) -> np.ndarray:
        """Shortest representative of chart displacement(s) ``d`` (torus only)."""
        return minimal_image(np.asarray(d, dtype=float), self.lattice)

    def geodesic_distance(self, p, q) -> np.ndarray | float:
        """Geodesic distance, broadcasting over leading axes."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if self.is_torus:
            d = minimal_image(q - p, self.lattice)
            out = np.linalg.norm(d, axis=-1)
        else:
            cr = np.linalg.norm(np.cross(p, q), axis=-1)
            dot = np.sum(p * q, axis=-1)
            out = self.radius * np.arctan2(cr, dot)
        return float(out) if np.ndim(out) == 0 else out

    def geodesic_circle_length(self, r: float) -> float:
        if self.is_torus:
            return 2 * np.pi * r
        return 2 * np.pi * self.radius * np.sin(r / self.radius)

    def geodesic_circle(self, center, r: float, n: int, phase: float = 0.0) -> np.ndarray:
        """``n`` points equally spaced on the geodesic circle of radius ``r``."""
        theta = phase + 2 * np.pi * np.arange(n) / n
        c, s = np.cos(theta), np.sin(theta)
        center = np.asarray(center, dtype=float)
        if self.is_torus:
            return self.wrap(center + r * np.column_stack([c, s]))
        e0 = center / np.linalg.norm(center)
        e1, e2 = tangent_frame(e0)
        a = r / self.radius
        dirs = np.cos(a) * e0 + np.sin(a) * (np.outer(c, e1) + np.outer(s, e2))
        return self.radius * dirs


def shortest_lattice_vector(lattice) -> float:
    lat = np.asarray(lattice, dtype=float)
    best = np.inf
    for i in range(-3, 4):
        for j in range(-3, 4):
            if i == 0 and j == 0:
                continue
            best = min(best, float(np.linalg.norm(lat @ (i, j))))
    return best


def minimal_image(d: np.ndarray, lattice: np.ndarray) -> np.ndarray:
    """Reduce chart displacements to the shortest of the 9 nearest translates."""
    lat = np.asarray(lattice, dtype=float)
    u = np.linalg.solve(lat, d.reshape(-1, 2).T).T
    base = (u - np.round(u)) @ lat.T
    cand = base[:, None, :] + (_TRANSLATES @ lat.T)[None, :, :]
    k = np.argmin(np.einsum("nij,nij->ni", cand, cand), axis=1)
    return cand[np.arange(len(cand)), k].reshape(d.shape)


def tangent_frame(n) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal pair spanning the plane orthogonal to unit vector ``n``."""
    n = np.asarray(n, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - n * (a @ n)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


@dataclass(frozen=True)
class Weight:
    """Positive density on a model surface, evaluated at chart points."""

    evaluator: Callable[[np.ndarray], np.ndarray]
    descriptor: str = "1"
    constant: Optional[float] = None

    @classmethod
    def const(cls, value: float = 1.0) -> "Weight":
        if not value > 0:
            raise MeshError(f"weight must be positive, got {value}")
        return cls(lambda x, v=float(value): np.full(len(np.atleast_2d(x)), v),
                   descriptor=repr(float(value)), constant=float(value))

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def __call__(self, points) -> np.ndarray:
        vals = np.asarray(self.evaluator(np.atleast_2d(np.asarray(points, dtype=float))),
                          dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(np.atleast_2d(points)), float(vals))
        if not np.all(vals > 0):
            raise MeshError(f"weight {self.descriptor} is not positive at all samples "
                            f"(min {vals.min():.3e})")
        return vals


@dataclass
class TriMesh:
    """Indexed triangle mesh.

    Parameters
    ----------
    vertices : (n, 2) or (n, 3) array
        Chart coordinates (periodic torus) or embedded positions.
    triangles : (m, 3) int array
        Consistently oriented vertex triples.
    boundary_loops : list of int arrays
        Closed vertex cycles covering the boundary edges. Computed when omitted.
    vertex_tags : dict
        Optional per-vertex integer arrays (e.g. ``"hole"``: hole id or -1).
    lattice : (2, 2) array, optional
        Periodic identification of the chart; edges use the minimal image.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: Optional[list] = None
    vertex_tags: dict = field(default_factory=dict)
    lattice: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.lattice is not None:
            self.lattice = np.asarray(self.lattice, dtype=float)
        if self.boundary_loops is None:
            self.boundary_loops = find_boundary_loops(self.triangles)
        else:
            self.boundary_loops = [np.asarray(l, dtype=np.int64) for l in self.boundary_loops]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def is_periodic(self) -> bool:
        return self.lattice is not None

    def edge_vector(self, i, j) -> np.ndarray:
        d = self.vertices[j] - self.vertices[i]
        if self.is_periodic:
            d = minimal_image(d, self.lattice)
        return d

    def triangle_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge vectors ``x1 - x0`` and ``x2 - x0`` for every triangle."""
        t = self.triangles
        return self.edge_vector(t[:, 0], t[:, 1]), self.edge_vector(t[:, 0], t[:, 2])

    def triangle_areas(self) -> np.ndarray:
        e1, e2 = self.triangle_edges()
        if e1.shape[1] == 2:
            return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def signed_areas_2d(self) -> np.ndarray:
        e1, e2 = self.triangle_edges()
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def triangle_points(self, bary: np.ndarray) -> np.ndarray:
        """Points ``x0 + b1 e1 + b2 e2`` for barycentric rows ``bary`` (k, 3).

        Returns an (m, k, dim) array; periodic points are wrapped into the cell.
        """
        e1, e2 = self.triangle_edges()
        x0 = self.vertices[self.triangles[:, 0]]
        pts = x0[:, None, :] + bary[None, :, 1:2] * e1[:, None, :] + bary[None, :, 2:3] * e2[:, None, :]
        if self.is_periodic:
            u = np.linalg.solve(self.lattice, pts.reshape(-1, 2).T).T
            u -= np.floor(u)
            u[u >= 1.0] = 0.0
            pts = (u @ self.lattice.T).reshape(pts.shape)
        return pts

    def boundary_edges(self) -> np.ndarray:
        """(k, 2) array of boundary edges, oriented along the loops."""
        if not self.boundary_loops:
            return np.zeros((0, 2), dtype=np.int64)
        return np.concatenate([np.column_stack([l, np.roll(l, -1)]) for l in self.boundary_loops])

    def loop_lengths(self) -> list[float]:
        out = []
        for loop in self.boundary_loops:
            d = self.edge_vector(loop, np.roll(loop, -1))
            out.append(float(np.linalg.norm(d, axis=1).sum()))
        return out

    def edge_lengths(self) -> np.ndarray:
        e = unique_edges(self.triangles)
        return np.linalg.norm(self.edge_vector(e[:, 0], e[:, 1]), axis=1)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(unique_edges(self.triangles)) + self.n_triangles

    def checksum(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.round(self.vertices, 12).tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()[:16]

    def validate(self, area_rtol: float = 1e-14) -> None:
        """Check the structural invariants; raise :class:`MeshError` on failure."""
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= self.n_vertices):
            raise MeshError("triangle index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise MeshError("triangle with repeated vertex")
        areas = self.triangle_areas()
        bad = np.flatnonzero(areas <= area_rtol * areas.mean())
        if bad.size:
            raise MeshError(f"degenerate triangle {int(bad[0])}")
        if self.vertices.shape[1] == 2 and np.any(self.signed_areas_2d() <= 0):
            raise MeshError("chart triangles are not consistently counter-clockwise")
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        d_keys = directed[:, 0] * self.n_vertices + directed[:, 1]
        if len(np.unique(d_keys)) != len(d_keys):
            raise MeshError("inconsistent orientation or non-manifold edge")
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und[:, 0] * self.n_vertices + und[:, 1], return_counts=True)
        if counts.max(initial=0) > 2:
            raise MeshError("edge shared by more than two triangles")
        n_bdry = int(np.sum(counts == 1))
        covered = sum(len(l) for l in self.boundary_loops)
        if covered != n_bdry:
            raise MeshError(f"boundary loops cover {covered} edges, mesh has {n_bdry}")
        if n_bdry:
            be = self.boundary_edges()
            if not np.all(np.isin(be[:, 0] * self.n_vertices + be[:, 1], d_keys)):
                raise MeshError("boundary loops do not follow oriented mesh edges")

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(np.asarray(vertices, dtype=float), self.triangles.copy(),
                       [l.copy() for l in self.boundary_loops],
                       {k: v.copy() for k, v in self.vertex_tags.items()}, self.lattice)


def unique_edges(triangles: np.ndarray) -> np.ndarray:
    t = np.asarray(triangles)
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    return np.unique(e, axis=0)


def find_boundary_loops(triangles: np.ndarray) -> list[np.ndarray]:
    """Chain the degree-1 edges into closed loops following triangle orientation."""
    t = np.asarray(triangles)
    if t.size == 0:
        return []
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    bd = directed[counts[inv] == 1]
    if len(bd) == 0:
        return []
    nxt = {}
    for a, b in bd:
        if int(a) in nxt:
            raise MeshError(f"boundary vertex {int(a)} is pinched (non-manifold)")
        nxt[int(a)] = int(b)
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen or cur not in nxt:
                raise MeshError("boundary edges do not form closed loops")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def total_area(mesh: TriMesh) -> float:
    return float(mesh.triangle_areas().sum())


def boundary_length(mesh: TriMesh) -> float:
    return float(sum(mesh.loop_lengths()))


# ---------------------------------------------------------------------------
# builders

def build_flat_torus_mesh(model: SurfaceModel, target_edge_length: float) -> TriMesh:
    """Structured periodic mesh of the fundamental parallelogram."""
    if not model.is_torus:
        raise MeshError("build_flat_torus_mesh needs a flat torus model")
    lat = model.lattice
    norms = np.linalg.norm(lat, axis=0)
    if not 0 < target_edge_length < norms.min() / 4:
        raise MeshError(f"target_edge_length {target_edge_length} must lie in "
                        f"(0, {norms.min() / 4:.4g}) (a quarter of the shortest generator)")
    n1, n2 = (int(np.ceil(n / target_edge_length)) for n in norms)
    n1, n2 = max(n1, 4), max(n2, 4)
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    u = np.column_stack([i.ravel() / n1, j.ravel() / n2])
    verts = u @ lat.T
    idx = lambda a, b: (a % n1) * n2 + (b % n2)  # noqa: E731
    a, b = i.ravel(), j.ravel()
    v00, v10, v01, v11 = idx(a, b), idx(a + 1, b), idx(a, b + 1), idx(a + 1, b + 1)
    # split every cell along its shorter diagonal
    g1, g2 = lat[:, 0] / n1, lat[:, 1] / n2
    if np.linalg.norm(g1 + g2) <= np.linalg.norm(g1 - g2):
        tris = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])])
    else:
        tris = np.concatenate([np.column_stack([v00, v10, v01]), np.column_stack([v10, v11, v01])])
    mesh = TriMesh(verts, tris, lattice=lat)
    if np.linalg.det(lat) < 0:
        mesh.triangles = mesh.triangles[:, [0, 2, 1]].copy()
    return mesh


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1 + np.sqrt(5)) / 2
    v = np.array([[-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
                  [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
                  [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def midpoint_subdivide(vertices: np.ndarray, triangles: np.ndarray):
    """One level of 1-to-4 subdivision. Returns (vertices, triangles, parent_edges).

    ``parent_edges`` lists, for each new vertex, the edge it bisects.
    """
    t = np.asarray(triangles)
    edges = unique_edges(t)
    nv = len(vertices)
    key = edges[:, 0] * nv + edges[:, 1]
    order = np.argsort(key)
    skey = key[order]

    def mid(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        return nv + order[np.searchsorted(skey, lo * nv + hi)]

    new_v = np.concatenate([vertices, 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])])
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
    new_t = np.concatenate([np.column_stack([a, ab, ca]), np.column_stack([b, bc, ab]),
                            np.column_stack([c, ca, bc]), np.column_stack([ab, bc, ca])])
    return new_v, new_t, edges


def build_sphere_mesh(model: SurfaceModel, subdivision_level: int) -> TriMesh:
    """Icosphere: subdivided icosahedron projected onto the sphere, outward oriented."""
    if model.is_torus:
        raise MeshError("build_sphere_mesh needs a round sphere model")
    if subdivision_level < 0:
        raise MeshError("subdivision_level must be >= 0")
    v, f = _icosahedron()
    for _ in range(int(subdivision_level)):
        v, f, _ = midpoint_subdivide(v, f)
        v = v / np.linalg.norm(v, axis=1, keepdims=True)
    return TriMesh(model.radius * v, f)


def sphere_level_for_spacing(h: float, radius: float = 1.0) -> int:
    """Smallest icosphere level whose longest edge is below ``h``."""
    level = 0
    # icosahedron edge is 1.0515; projection stretches central edges by < 25%
    while 1.0515 * radius * (1.25 if level else 1.0) * 0.5**level > h:
        level += 1
    return level


def build_disk_mesh(radius: float = 1.0, n_rings: int = 40) -> TriMesh:
    """Planar disk from concentric rings (ring k has 6k points), Delaunay triangulated."""
    from scipy.spatial import Delaunay

    pts = [np.zeros((1, 2))]
    for k in range(1, n_rings + 1):
        th = 2 * np.pi * (np.arange(6 * k) + 0.5 * (k % 2)) / (6 * k)
        pts.append(radius * k / n_rings * np.column_stack([np.cos(th), np.sin(th)]))
    pts = np.concatenate(pts)
    tri = Delaunay(pts).simplices
    mesh = TriMesh(pts, _orient_ccw(pts, tri))
    return mesh


def build_cap_mesh(angle: float, radius: float = 1.0, n_rings: int = 40) -> TriMesh:
    """Geodesic cap ``{dist(x, north pole) <= angle}`` on the sphere of ``radius``.

    The planar ring disk is mapped by geodesic polar coordinates, so the
    boundary ring lies exactly on the cap's boundary circle.
    """
    if not 0 < angle < np.pi:
        raise MeshError("cap angle must lie in (0, pi)")
    disk = build_disk_mesh(angle, n_rings)
    p = disk.vertices
    rho = np.linalg.norm(p, axis=1)
    phi = np.arctan2(p[:, 1], p[:, 0])
    v = radius * np.column_stack([np.sin(rho) * np.cos(phi), np.sin(rho) * np.sin(phi),
                                  np.cos(rho)])
    return TriMesh(v, disk.triangles)


def _orient_ccw(pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
    tri = np.array(tri, dtype=np.int64)
    e1 = pts[tri[:, 1]] - pts[tri[:, 0]]
    e2 = pts[tri[:, 2]] - pts[tri[:, 0]]
    neg = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def embed_planar(mesh: TriMesh) -> TriMesh:
    """Lift a non-periodic planar mesh into R^3 at z = 0."""
    v = np.column_stack([mesh.vertices, np.zeros(mesh.n_vertices)])
    return TriMesh(v, mesh.triangles.copy(), mesh.boundary_loops, dict(mesh.vertex_tags))


# ---------------------------------------------------------------------------
# OFF + JSON sidecar

def write_off(mesh: TriMesh, path, model: Optional[SurfaceModel] = None,
              extra: Optional[dict] = None) -> tuple[Path, Path]:
    """Write ``path`` (ASCII OFF) and ``path.json`` (sidecar).

    Sidecar fields: ``format``, ``version``, ``chart_dim``, ``lattice`` (null
    unless periodic), ``model``, ``boundary_loops``, ``vertex_tags`` (name to
    per-vertex integer list), ``checksum``, plus any ``extra`` keys.
    """
    path = Path(path)
    v = mesh.vertices
    if v.shape[1] == 2:
        v = np.column_stack([v, np.zeros(len(v))])
    lines = ["OFF", f"{len(v)} {mesh.n_triangles} 0"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in v.tolist()]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n")
    side = {
        "format": "stekhom-mesh",
        "version": 1,
        "chart_dim": int(mesh.vertices.shape[1]),
        "lattice": None if mesh.lattice is None else mesh.lattice.tolist(),
        "model": None if model is None else model.describe(),
        "boundary_loops": [l.tolist() for l in mesh.boundary_loops],
        "vertex_tags": {k: np.asarray(t).tolist() for k, t in mesh.vertex_tags.items()},
        "checksum": mesh.checksum(),
    }
    if extra:
        side.update(extra)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(side, indent=1, sort_keys=True))
    return path, sidecar


def read_off(path) -> tuple[TriMesh, dict]:
    """Read an OFF file and, if present, its JSON sidecar."""
    path = Path(path)
    tokens = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path} is not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    v = np.array(tokens[pos:pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        if k != 3:
            raise MeshError("only triangular faces are supported")
        faces.append(tokens[pos + 1:pos + 4])
        pos += 4
    t = np.array(faces, dtype=np.int64).reshape(-1, 3)
    side = {}
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        side = json.loads(sidecar.read_text())
    if side.get("chart_dim") == 2:
        v = v[:, :2]
    mesh = TriMesh(v, t, side.get("boundary_loops"),
                   {k: np.asarray(x) for k, x in side.get("vertex_tags", {}).items()},
                   side.get("lattice"))
    return mesh, side


def rotate(mesh: TriMesh, rotation: np.ndarray) -> TriMesh:
    return mesh.with_vertices(mesh.vertices @ np.asarray(rotation).T)


def scale(mesh: TriMesh, t: float) -> TriMesh:
    out = mesh.with_vertices(mesh.vertices * t)
    if out.lattice is not None:
        out.lattice = out.lattice * t
    return out


def subset(mesh: TriMesh, tri_ids: Sequence[int]) -> TriMesh:
    return TriMesh(mesh.vertices, mesh.triangles[np.asarray(tri_ids)], lattice=mesh.lattice)
