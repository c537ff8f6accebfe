"""ε-sweeps that compare Steklov spectra of perforated surfaces with the
weighted Laplace spectrum of the unperforated surface.

One row of a sweep runs the whole pipeline at a single ε: separated set,
Voronoi areas, hole radii, carving, Steklov solve, normalisation and weak-*
defects. Targets come from the Laplace solver on a closed mesh at least as
fine as the finest perforated mesh; where a closed-form spectrum exists it is
reported too and is used for the verdicts.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .expr import compile_expression
from .fem import STEKLOV, WEIGHTED_LAPLACE, SpectralResult, laplace_spectrum, steklov_spectrum
from .mesh import (SurfaceModel, TriMesh, Weight, build_flat_torus_mesh, build_sphere_mesh,
                   total_area)
from .perforation import (PerforationConfig, background_mesh, hole_radius,
                          perforate, surface_integral, weakstar_defect)
from .sampling import DEFAULT_CANDIDATE_BUDGET, maximal_separated_set, voronoi_partition

logger = logging.getLogger(__name__)

KOKAREV_BOUND = 8 * np.pi


class HomogenizationError(ValueError):
    pass


def normalized_steklov(domain, result: SpectralResult) -> np.ndarray:
    """Σ_k = length(∂Ω) σ_k."""
    if result.problem != STEKLOV:
        raise HomogenizationError(f"expected a Steklov result, got {result.problem}")
    mesh = getattr(domain, "mesh", domain)
    return float(sum(mesh.loop_lengths())) * np.asarray(result.eigenvalues)


def normalized_laplace(mesh: TriMesh, result: SpectralResult) -> np.ndarray:
    """Λ_k = area(M) λ_k, defined for constant weight 1 only."""
    if result.problem != WEIGHTED_LAPLACE:
        raise HomogenizationError(f"expected a Laplace result, got {result.problem}")
    if not result.info.get("constant_weight", False) or result.info.get("weight") not in ("1.0", "1"):
        raise HomogenizationError("Λ_k is only defined for the unweighted problem (β ≡ 1)")
    return total_area(mesh) * np.asarray(result.eigenvalues)


def analytic_laplace(model: SurfaceModel, weight: Weight, count: int) -> Optional[np.ndarray]:
    """First ``count + 1`` eigenvalues in closed form when β is constant, else None."""
    if not weight.is_constant:
        return None
    beta = weight.constant
    if model.is_torus:
        dual = np.linalg.inv(model.lattice).T
        m = int(np.ceil(np.sqrt(count + 1))) + 3
        k = np.array([(i, j) for i in range(-m, m + 1) for j in range(-m, m + 1)], dtype=float)
        vals = np.sort(4 * np.pi ** 2 * np.sum((k @ dual.T) ** 2, axis=1))
        return vals[: count + 1] / beta
    vals = []
    l = 0
    while len(vals) < count + 1:
        vals.extend([l * (l + 1) / model.radius ** 2] * (2 * l + 1))
        l += 1
    return np.array(vals[: count + 1]) / beta


def default_test_functions(model: SurfaceModel) -> tuple[str, ...]:
    if model.is_torus:
        return ("1", "sin(2*pi*x)", "cos(2*pi*y)")
    return ("1", "x", "z")


@dataclass
class ExperimentConfig:
    seed: int = 1
    tol: float = 1e-8
    boundary_segments: int = 16
    mesh_fraction: float = 0.25  # background edge length / ε
    candidate_budget: int = DEFAULT_CANDIDATE_BUDGET
    test_functions: Optional[tuple] = None
    gap_band: float = 0.10
    extra_pairs: int = 3  # requested beyond k_max so clusters are not cut
    jobs: int = 1

    def perforation(self) -> PerforationConfig:
        return PerforationConfig(boundary_segments=self.boundary_segments)


def build_domain(model: SurfaceModel, weight: Weight, epsilon: float,
                 config: Optional[ExperimentConfig] = None):
    """Sample, tessellate and carve; returns (domain, cells, background mesh)."""
    config = config or ExperimentConfig()
    sset = maximal_separated_set(model, epsilon, config.seed, budget=config.candidate_budget)
    bg = background_mesh(model, epsilon, config.mesh_fraction)
    cells = voronoi_partition(model, sset, bg)
    areas = np.array([c.area for c in cells])
    radii = [hole_radius(model, c.center, c.area, weight, epsilon) for c in cells]
    dom = perforate(bg, sset, radii, weight, areas, config.perforation())
    return dom, cells, bg


@dataclass
class SweepRow:
    epsilon: float
    n_holes: int = 0
    boundary_length: float = float("nan")
    target_boundary_length: float = float("nan")
    cell_area_sum: float = float("nan")
    sigma: list = field(default_factory=list)
    Sigma: list = field(default_factory=list)
    weakstar: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    max_residual: float = float("nan")
    max_harmonicity_defect: float = float("nan")
    error: Optional[dict] = None
    runtimes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_row(model, weight, eps, k_max, config, tests) -> SweepRow:
    row = SweepRow(float(eps))
    t0 = time.perf_counter()
    try:
        dom, cells, bg = build_domain(model, weight, eps, config)
        t1 = time.perf_counter()
        res = steklov_spectrum(dom, k_max + config.extra_pairs, config.tol)
        t2 = time.perf_counter()
        areas = np.array([c.area for c in cells])
        r = dom.radii
        row.n_holes = len(dom.holes)
        row.boundary_length = dom.boundary_length
        row.target_boundary_length = surface_integral(model, bg, weight)
        row.cell_area_sum = float(areas.sum())
        row.sigma = [float(x) for x in res.eigenvalues[: k_max + 1]]
        row.Sigma = [float(x) for x in normalized_steklov(dom, res)[: k_max + 1]]
        funcs = [compile_expression(t) for t in tests]
        row.weakstar = dict(zip(tests, map(float, weakstar_defect(dom, funcs, bg))))
        row.mesh = {
            "n_vertices": dom.mesh.n_vertices,
            "n_triangles": dom.mesh.n_triangles,
            "boundary_segments": dom.segments,
            "min_hole_gap": float(dom.stats.get("min_hole_gap", np.inf)),
            "r_max_over_eps2": float(r.max() / eps ** 2),
            "r_min_over_eps2": float(r.min() / eps ** 2),
            "checksum": dom.mesh.checksum(),
        }
        row.max_residual = float(res.residuals.max())
        row.max_harmonicity_defect = float(res.harmonicity_defects[1: k_max + 1].max())
        row.runtimes = {"construct": t1 - t0, "solve": t2 - t1,
                        "total": time.perf_counter() - t0}
    except Exception as exc:  # recorded; the sweep carries on
        logger.warning("row eps=%g failed: %s", eps, exc)
        row.error = {"type": type(exc).__name__, "message": str(exc)}
        row.runtimes = {"total": time.perf_counter() - t0}
    return row


@dataclass
class ConvergenceReport:
    model: dict
    weight: str
    k_max: int
    rows: list
    targets: dict
    verdicts: dict
    config: dict

    def to_dict(self, timings: bool = False) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            if not timings:
                d.pop("runtimes")
            rows.append(d)
        return {"model": self.model, "weight": self.weight, "k_max": self.k_max,
                "rows": rows, "targets": self.targets, "verdicts": self.verdicts,
                "config": self.config}

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        tests = sorted({t for r in self.rows for t in r.weakstar})
        k = range(self.k_max + 1)
        w.writerow(["epsilon", "n_holes", "boundary_length", "target_boundary_length"]
                   + [f"sigma_{i}" for i in k] + [f"Sigma_{i}" for i in k]
                   + [f"weakstar[{t}]" for t in tests] + ["n_vertices", "error"])
        for r in self.rows:
            pad = lambda xs: [repr(x) for x in xs] + [""] * (len(k) - len(xs))
            w.writerow([repr(r.epsilon), r.n_holes, repr(r.boundary_length),
                        repr(r.target_boundary_length)] + pad(r.sigma) + pad(r.Sigma)
                       + [repr(r.weakstar[t]) if t in r.weakstar else "" for t in tests]
                       + [r.mesh.get("n_vertices", ""), "" if r.ok else r.error["message"]])
        return buf.getvalue()

    @property
    def good_rows(self) -> list:
        return [r for r in self.rows if r.ok]


def _finite(obj):
    """JSON has no inf/nan; map them to strings."""
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def reference_mesh(model: SurfaceModel, min_vertices: int) -> TriMesh:
    """Closed uniform mesh with at least ``min_vertices`` vertices."""
    if model.is_torus:
        h = np.sqrt(model.area / max(min_vertices, 16)) * 0.999
        return build_flat_torus_mesh(model, h)
    level = 0
    while 10 * 4 ** level + 2 < min_vertices:
        level += 1
    return build_sphere_mesh(model, level)


def laplace_targets(model: SurfaceModel, weight: Weight, k_max: int, min_vertices: int,
                    tol: float = 1e-8) -> dict:
    mesh = reference_mesh(model, min_vertices)
    res = laplace_spectrum(mesh, weight, k_max + 3, tol, model=model)
    lam = res.eigenvalues[: k_max + 1]
    mass = surface_integral(model, mesh, weight)
    out = {"lambda_fem": [float(x) for x in lam],
           "Lambda_fem": [float(mass * x) for x in lam],
           "reference_vertices": mesh.n_vertices,
           "reference_checksum": mesh.checksum(),
           "beta_mass": float(mass)}
    exact = analytic_laplace(model, weight, k_max)
    if exact is not None:
        out["lambda_exact"] = [float(x) for x in exact]
        out["Lambda_exact"] = [float(mass * x) for x in exact]
    return out


def convergence_experiment(model: SurfaceModel, weight: Weight, epsilon_list: Sequence[float],
                           k_max: int = 1, config: Optional[ExperimentConfig] = None
                           ) -> ConvergenceReport:
    """Run one row per ε and compare with the weighted Laplace targets."""
    config = config or ExperimentConfig()
    eps = [float(e) for e in epsilon_list]
    if not eps or any(a <= b for a, b in zip(eps, eps[1:])):
        raise HomogenizationError("epsilon_list must be non-empty and strictly decreasing")
    if k_max < 1:
        raise HomogenizationError("k_max must be at least 1")
    tests = tuple(config.test_functions or default_test_functions(model))
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(lambda e: _run_row(model, weight, e, k_max, config, tests), eps))
    else:
        rows = [_run_row(model, weight, e, k_max, config, tests) for e in eps]
    rows.sort(key=lambda r: -r.epsilon)

    finest = max([r.mesh.get("n_vertices", 0) for r in rows] + [1000])
    targets = laplace_targets(model, weight, k_max, finest, config.tol)
    lam = np.array(targets.get("lambda_exact", targets["lambda_fem"]))
    good = [r for r in rows if r.ok]
    verdicts = {"reference": "exact" if "lambda_exact" in targets else "fem", "band": config.gap_band}
    if good:
        gaps = np.array([[abs(r.sigma[k] - lam[k]) / lam[k] for k in range(1, k_max + 1)]
                         for r in good])
        slack = np.array([[r.sigma[k] - lam[k] for k in range(1, k_max + 1)] for r in good])
        verdicts.update({
            "epsilons": [r.epsilon for r in good],
            "gaps": gaps.T.tolist(),
            "finest_gap": gaps[-1].tolist(),
            "gaps_decreasing": [bool(np.all(np.diff(g) < 0)) for g in gaps.T],
            "within_band": [bool(g <= config.gap_band) for g in gaps[-1]],
            "upper_slack": slack.T.tolist(),
            "weakstar_decreasing": {
                t: bool(np.all(np.diff([r.weakstar[t] for r in good]) < 0)) for t in tests},
        })
    return ConvergenceReport(model.describe(), weight.descriptor, k_max, rows, targets, verdicts,
                             _finite(asdict(config)))


@dataclass
class KokarevRecord:
    Sigma1: float
    sigma1: float
    margin: float  # 8π - Σ₁
    band: float
    flagged: bool
    boundary_components: int

    def to_dict(self) -> dict:
        return asdict(self)


def kokarev_check(domain, result: SpectralResult, band: float = 0.02) -> KokarevRecord:
    """Compare Σ₁ of a genus-0 spherical domain with the bound 8π.

    ``band`` is the relative discretisation allowance; exceeding 8π by more
    than ``band * 8π`` sets ``flagged``.
    """
    mesh = getattr(domain, "mesh", domain)
    parent = getattr(domain, "parent", None)
    if parent is not None and parent.is_torus:
        raise HomogenizationError("the 8π bound concerns domains in the round sphere")
    b = len(mesh.boundary_loops)
    if mesh.euler_characteristic() != 2 - b:
        raise HomogenizationError("domain is not of genus 0")
    S1 = float(normalized_steklov(mesh, result)[1])
    margin = KOKAREV_BOUND - S1
    return KokarevRecord(S1, float(result.eigenvalues[1]), margin, band * KOKAREV_BOUND,
                         bool(-margin > band * KOKAREV_BOUND), b)
