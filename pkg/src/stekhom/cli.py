"""Command-line front end.

Every command writes its artifacts plus ``manifest.json`` into the output
directory (``--out``, else ``$STEKHOM_OUTPUT_DIR``, else ``./stekhom-out``).
Options can also come from a TOML file given with ``--config``: keys are the
long option names with dashes turned into underscores, either at top level
or inside a table named after the command (``[converge]``, ``[fbms]``...).
Command-line values override the file.

Exit codes: 0 success, 1 compute error (error JSON on stderr and in
``error.json``), 2 invalid configuration or missing input.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .expr import ExpressionError, parse_weight
from .mesh import (MeshError, SurfaceModel, build_disk_mesh, build_flat_torus_mesh,
                   build_sphere_mesh, read_off, write_off)

ENV_OUTPUT = "STEKHOM_OUTPUT_DIR"
DEFAULT_OUTPUT = "stekhom-out"
logger = logging.getLogger("stekhom")


class UsageError(Exception):
    """Invalid configuration; exit status 2."""


# --------------------------------------------------------------------------
# configuration


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        return tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None


DEFAULTS = {
    "sample": {"model": "torus", "lattice": None, "radius": 1.0, "eps": 0.2, "seed": 1,
               "beta": "1", "mesh_fraction": 0.25},
    "perforate": {"model": "torus", "lattice": None, "radius": 1.0, "eps": 0.2, "seed": 1,
                  "beta": "1", "mesh_fraction": 0.25, "boundary_segments": 16},
    "solve": {"problem": "laplace", "model": "sphere", "lattice": None, "radius": 1.0,
              "mesh": None, "level": 5, "h": 0.01, "rings": 60, "beta": "1", "count": 6,
              "tol": 1e-8, "eigenvectors": False},
    "converge": {"model": "sphere", "lattice": None, "radius": 1.0, "beta": "1",
                 "eps": "0.6,0.4,0.25", "k": 1, "seed": 1, "tol": 1e-8,
                 "boundary_segments": 16, "mesh_fraction": 0.25, "band": 0.10, "jobs": 1},
    "fbms": {"symmetry": "tetrahedral", "boundary": 4, "resolution": 8, "rounds": 3,
             "tol": 1e-10, "count": 6},
    "report": {"input": None},
}


def _model(cfg: dict) -> SurfaceModel:
    name = str(cfg["model"]).lower()
    try:
        if name in ("torus", "square", "flat_torus"):
            if cfg.get("lattice"):
                vals = [float(v) for v in str(cfg["lattice"]).split(",")]
                if len(vals) != 4:
                    raise UsageError("--lattice takes four numbers a,b,c,d (columns (a,c), (b,d))")
                return SurfaceModel.flat_torus([[vals[0], vals[1]], [vals[2], vals[3]]])
            return SurfaceModel.flat_torus()
        if name in ("equilateral", "hex"):
            return SurfaceModel.equilateral_torus()
        if name in ("sphere", "round_sphere"):
            return SurfaceModel.round_sphere(float(cfg["radius"]))
    except MeshError as exc:
        raise UsageError(str(exc)) from None
    raise UsageError(f"unknown model {cfg['model']!r}; use torus, equilateral or sphere")


def _weight(text):
    try:
        return parse_weight(str(text))
    except (ExpressionError, MeshError) as exc:
        raise UsageError(f"invalid --beta: {exc}") from None


def _eps_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"--eps must be a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("--eps is empty")
    return vals


def _check_eps(model: SurfaceModel, eps: list[float]) -> None:
    for e in eps:
        if not 0 < e < model.injectivity_scale:
            raise UsageError(f"epsilon {e} must lie in (0, {model.injectivity_scale:.4g})")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise UsageError("epsilon list must be strictly decreasing")


def _positive_int(cfg, key, minimum=1):
    try:
        v = int(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"--{key.replace('_', '-')} must be an integer") from None
    if v < minimum:
        raise UsageError(f"--{key.replace('_', '-')} must be >= {minimum}")
    return v


def _positive_float(cfg, key):
    try:
        v = float(cfg[key])
    except (TypeError, ValueError):
        raise UsageError(f"--{key.replace('_', '-')} must be a number") from None
    if not v > 0:
        raise UsageError(f"--{key.replace('_', '-')} must be positive")
    return v


def config_hash(command: str, cfg: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# artifacts


class Run:
    """Collects artifacts for one command and writes the manifest."""

    def __init__(self, command: str, cfg: dict, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.hash = config_hash(command, cfg)
        self.artifacts: list[Path] = []
        self.timings: dict = {}
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out / name

    def json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        body = dict(payload)
        body["config_hash"] = self.hash
        p.write_text(json.dumps(_plain(body), indent=1, sort_keys=True) + "\n")
        self.artifacts.append(p)
        return p

    def text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.artifacts.append(p)
        return p

    def stamp_sidecar(self, path: Path) -> None:
        """Add the config hash to an OFF sidecar written by the mesh module."""
        data = json.loads(Path(path).read_text())
        data["config_hash"] = self.hash
        Path(path).write_text(json.dumps(_plain(data), indent=1, sort_keys=True) + "\n")

    def add(self, *paths: Path) -> None:
        self.artifacts.extend(Path(p) for p in paths)

    def manifest(self, seeds: Optional[dict] = None) -> Path:
        import scipy

        self.timings["total_s"] = time.perf_counter() - self.t0
        body = {
            "command": self.command,
            "config": self.cfg,
            "config_hash": self.hash,
            "seeds": seeds or {},
            "artifacts": [{"path": p.name, "sha256": _sha256(p)} for p in self.artifacts],
            "versions": {"stekhom": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "kernel_backend": kernels.BACKEND,
            "wall_times": self.timings,
        }
        p = self.path("manifest.json")
        p.write_text(json.dumps(_plain(body), indent=1, sort_keys=True) + "\n")
        return p


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else repr(f)
    return obj


# --------------------------------------------------------------------------
# commands


def cmd_sample(cfg: dict, run: Run) -> int:
    from .perforation import background_mesh, hole_radius
    from .sampling import maximal_separated_set, voronoi_partition, write_cells_csv

    model = _model(cfg)
    eps = _eps_list(cfg["eps"])
    _check_eps(model, eps[:1])
    weight = _weight(cfg["beta"])
    seed = int(cfg["seed"])
    t = time.perf_counter()
    sset = maximal_separated_set(model, eps[0], seed)
    mesh = background_mesh(model, eps[0], _positive_float(cfg, "mesh_fraction"))
    cells = voronoi_partition(model, sset, mesh)
    run.timings["sample_s"] = time.perf_counter() - t
    radii = np.array([hole_radius(model, c.center, c.area, weight, eps[0]) for c in cells])
    run.text("separated_set.json", sset.to_json() + "\n")
    run.add(write_cells_csv(run.path("cells.csv"), cells, radii))
    areas = np.array([c.area for c in cells])
    run.json("sample_summary.json", {
        "model": model.describe(), "epsilon": eps[0], "seed": seed, "n_points": len(sset),
        "audit_max_distance": sset.audit_max_distance, "cell_area_sum": float(areas.sum()),
        "model_area": model.area,
        "partition_defect": float(abs(areas.sum() - model.area) / model.area),
        "radius_over_eps2": [float(radii.min() / eps[0] ** 2), float(radii.max() / eps[0] ** 2)],
    })
    run.manifest({"sampling": seed})
    return 0


def cmd_perforate(cfg: dict, run: Run) -> int:
    from .homogenize import ExperimentConfig, build_domain

    model = _model(cfg)
    eps = _eps_list(cfg["eps"])
    _check_eps(model, eps[:1])
    weight = _weight(cfg["beta"])
    conf = ExperimentConfig(seed=int(cfg["seed"]),
                            boundary_segments=_positive_int(cfg, "boundary_segments", 3),
                            mesh_fraction=_positive_float(cfg, "mesh_fraction"))
    t = time.perf_counter()
    dom, cells, _ = build_domain(model, weight, eps[0], conf)
    dom.check_invariants()
    run.timings["perforate_s"] = time.perf_counter() - t
    off, side = dom.write(run.path("domain.off"))
    run.stamp_sidecar(side)
    run.add(off, side)
    areas = np.array([c.area for c in cells])
    run.json("perforate_summary.json", {
        "model": model.describe(), "weight": weight.descriptor, "epsilon": eps[0],
        "seed": conf.seed, "n_holes": len(dom.holes), "boundary_length": dom.boundary_length,
        "target_boundary_length": float(sum(h.target_length for h in dom.holes)),
        "cell_area_sum": float(areas.sum()), "min_hole_gap": dom.min_gap(),
        "n_vertices": dom.mesh.n_vertices, "n_triangles": dom.mesh.n_triangles,
        "boundary_segments": dom.segments, "mesh_checksum": dom.mesh.checksum(),
    })
    run.manifest({"sampling": conf.seed})
    return 0


def cmd_solve(cfg: dict, run: Run) -> int:
    from .fem import laplace_spectrum, steklov_spectrum
    from .homogenize import HomogenizationError, normalized_laplace, normalized_steklov

    problem = str(cfg["problem"]).lower()
    if problem not in ("laplace", "steklov"):
        raise UsageError("--problem must be laplace or steklov")
    count = _positive_int(cfg, "count")
    tol = _positive_float(cfg, "tol")
    model: Optional[SurfaceModel] = None
    if cfg.get("mesh"):
        p = Path(cfg["mesh"])
        if not p.is_file():
            raise UsageError(f"mesh file not found: {p}")
        mesh, side = read_off(p)
        if side.get("model"):
            model = SurfaceModel.from_description(side["model"])
    elif problem == "steklov":
        if str(cfg["model"]).lower() != "disk":
            raise UsageError("steklov without --mesh needs --model disk")
        mesh = build_disk_mesh(1.0, _positive_int(cfg, "rings", 2))
    else:
        model = _model(cfg)
        if model.is_torus:
            mesh = build_flat_torus_mesh(model, _positive_float(cfg, "h"))
        else:
            mesh = build_sphere_mesh(model, _positive_int(cfg, "level", 0))
    t = time.perf_counter()
    if problem == "steklov":
        res = steklov_spectrum(mesh, count, tol)
        normalised = normalized_steklov(mesh, res)
        label = "Sigma"
    else:
        weight = _weight(cfg["beta"])
        res = laplace_spectrum(mesh, weight, count, tol, model=model)
        try:
            normalised = normalized_laplace(mesh, res)
        except HomogenizationError:  # Λ_k only exists for β ≡ 1
            normalised = None
        label = "Lambda"
    run.timings["solve_s"] = time.perf_counter() - t
    body = res.to_dict()
    body["n_vertices"] = mesh.n_vertices
    if normalised is not None:
        body[label] = [float(x) for x in normalised]
    if cfg.get("eigenvectors"):
        run.add(res.write_eigenvectors(run.path("eigenvectors.npy")))
        body["eigenvector_layout"] = "npy, little-endian float64, shape (pairs, vertices)"
    run.json("spectrum.json", body)
    run.manifest()
    return 0


def cmd_converge(cfg: dict, run: Run) -> int:
    from .homogenize import ExperimentConfig, convergence_experiment

    model = _model(cfg)
    weight = _weight(cfg["beta"])
    eps = _eps_list(cfg["eps"])
    _check_eps(model, eps)
    k = _positive_int(cfg, "k")
    conf = ExperimentConfig(seed=int(cfg["seed"]), tol=_positive_float(cfg, "tol"),
                            boundary_segments=_positive_int(cfg, "boundary_segments", 3),
                            mesh_fraction=_positive_float(cfg, "mesh_fraction"),
                            gap_band=_positive_float(cfg, "band"),
                            jobs=_positive_int(cfg, "jobs"))
    t = time.perf_counter()
    report = convergence_experiment(model, weight, eps, k, conf)
    run.timings["sweep_s"] = time.perf_counter() - t
    run.timings["rows"] = {repr(r.epsilon): r.runtimes for r in report.rows}
    run.json("report.json", json.loads(report.to_json()))
    run.text("report.csv", report.to_csv())
    run.add(write_report_svg(run.path("report.json"), run.path("report.svg"), run.hash))
    run.manifest({"sampling": conf.seed})
    if not report.good_rows:
        raise ComputeFailure("converge", {"message": "every row of the sweep failed",
                                          "rows": [r.error for r in report.rows]})
    return 0


def cmd_fbms(cfg: dict, run: Run) -> int:
    from .fbms import GROUP_ORDERS, SUPPORTED, run_fbms

    kind = str(cfg["symmetry"]).lower()
    if kind not in GROUP_ORDERS:
        raise UsageError(f"unknown symmetry {cfg['symmetry']!r}; choose from {sorted(GROUP_ORDERS)}")
    b = _positive_int(cfg, "boundary")
    if b not in SUPPORTED[kind]:
        pairs = "; ".join(f"{k}: {', '.join(map(str, v))}" for k, v in SUPPORTED.items())
        raise UsageError(f"({kind}, b={b}) is not supported; supported pairs: {pairs}")
    res = run_fbms(kind, b, _positive_int(cfg, "resolution", 2), _positive_int(cfg, "rounds"),
                   _positive_float(cfg, "tol"), _positive_int(cfg, "count"))
    run.timings["fbms_s"] = res.runtime
    off, side = write_off(res.surface, run.path("surface.off"),
                          extra={"symmetry": kind, "boundary_components": b})
    run.stamp_sidecar(side)
    run.add(off, side)
    run.json("fbms.json", res.to_dict())
    run.manifest()
    return 0


def cmd_report(cfg: dict, run: Run) -> int:
    src = cfg.get("input")
    if not src or not Path(src).is_file():
        raise UsageError(f"report file not found: {src}")
    try:
        json.loads(Path(src).read_text())["rows"]
    except (ValueError, KeyError, TypeError):
        raise UsageError(f"{src} is not a convergence report") from None
    run.add(write_report_svg(Path(src), run.path(Path(src).stem + ".svg"), run.hash))
    run.manifest()
    return 0


def write_report_svg(report_path: Path, svg_path: Path, tag: str = "") -> Path:
    """Three panels: σ_k against ε with the targets, weak-* defects, Σ₁ against 8π."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rep = json.loads(Path(report_path).read_text())
    rows = [r for r in rep["rows"] if r.get("error") is None]
    eps = [r["epsilon"] for r in rows]
    k_max = rep["k_max"]
    targets = rep["targets"].get("lambda_exact", rep["targets"]["lambda_fem"])
    plt.rcParams["svg.hashsalt"] = "stekhom"
    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    ax = axes[0]
    for k in range(1, k_max + 1):
        line, = ax.plot(eps, [r["sigma"][k] for r in rows], "o-", label=f"σ_{k}(ε)")
        ax.axhline(targets[k], color=line.get_color(), ls="--", lw=1, label=f"λ_{k}")
    ax.set_xlabel("ε")
    ax.set_title("Steklov eigenvalues")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    ax = axes[1]
    names = sorted({t for r in rows for t in r["weakstar"]})
    for t in names:
        vals = [max(float(r["weakstar"][t]), 1e-16) for r in rows]
        ax.semilogy(eps, vals, "o-", label=t)
    ax.set_xlabel("ε")
    ax.set_title("weak-* defects")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    ax = axes[2]
    ax.plot(eps, [r["Sigma"][1] for r in rows], "o-", label="Σ_1(ε)")
    if rep["model"].get("kind") == "round_sphere":
        ax.axhline(8 * np.pi, color="k", ls="--", lw=1, label="8π")
    else:
        Lam = rep["targets"].get("Lambda_exact", rep["targets"]["Lambda_fem"])
        ax.axhline(Lam[1], color="k", ls="--", lw=1, label="Λ_1 target")
    ax.set_xlabel("ε")
    ax.set_title("normalised Σ_1")
    ax.invert_xaxis()
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None, "Creator": None,
                                                     "Description": f"config_hash {tag}"})
    plt.close(fig)
    return Path(svg_path)


class ComputeFailure(Exception):
    def __init__(self, module: str, payload: dict):
        super().__init__(payload.get("message", "compute error"))
        self.module, self.payload = module, payload


COMMANDS = {"sample": cmd_sample, "perforate": cmd_perforate, "solve": cmd_solve,
            "converge": cmd_converge, "fbms": cmd_fbms, "report": cmd_report}


# --------------------------------------------------------------------------
# parser


def _add_model(p):
    p.add_argument("--model", help="torus | equilateral | sphere (solve also accepts disk)")
    p.add_argument("--lattice", help="flat torus generators as a,b,c,d (columns (a,c) and (b,d))")
    p.add_argument("--radius", type=float, help="sphere radius")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--config", help="TOML file with option values")
    common.add_argument("--jobs", type=int, help="worker cap for parallel stages")
    common.add_argument("--log-level", default=S, help="logging level (default WARNING)")

    parser = argparse.ArgumentParser(prog="stekhom", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"stekhom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], argument_default=S,
                       help="maximal separated set and Voronoi cells")
    _add_model(p)
    p.add_argument("--eps", help="separation ε")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", help="weight expression in x, y (z on the sphere)")
    p.add_argument("--mesh-fraction", type=float, help="background edge length / ε")

    p = sub.add_parser("perforate", parents=[common], argument_default=S,
                       help="carve the holes and write the perforated mesh")
    _add_model(p)
    p.add_argument("--eps")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta")
    p.add_argument("--mesh-fraction", type=float)
    p.add_argument("--boundary-segments", type=int, help="minimum segments per hole circle")

    p = sub.add_parser("solve", parents=[common], argument_default=S,
                       help="Steklov or weighted Laplace eigenpairs")
    p.add_argument("--problem", help="laplace | steklov")
    _add_model(p)
    p.add_argument("--mesh", help="OFF file to solve on (with its JSON sidecar if present)")
    p.add_argument("--level", type=int, help="sphere subdivision level")
    p.add_argument("--h", type=float, help="torus target edge length")
    p.add_argument("--rings", type=int, help="disk mesh rings")
    p.add_argument("--beta")
    p.add_argument("--count", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--eigenvectors", action="store_true", help="also write eigenvectors.npy")

    p = sub.add_parser("converge", parents=[common], argument_default=S,
                       help="ε-sweep of σ_k against the weighted Laplace targets")
    _add_model(p)
    p.add_argument("--beta")
    p.add_argument("--eps", help="strictly decreasing comma-separated list")
    p.add_argument("--k", type=int, help="highest eigenvalue index")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--boundary-segments", type=int)
    p.add_argument("--mesh-fraction", type=float)
    p.add_argument("--band", type=float, help="relative gap band at the finest ε")

    p = sub.add_parser("fbms", help="free boundary minimal surfaces")
    fsub = p.add_subparsers(dest="action", required=True)
    q = fsub.add_parser("run", parents=[common], argument_default=S,
                        help="solve, reflect and diagnose one reference surface")
    q.add_argument("--symmetry", help="tetrahedral | octahedral | icosahedral")
    q.add_argument("--boundary", type=int, help="number of boundary components b")
    q.add_argument("--resolution", type=int, help="initial grid cells per side")
    q.add_argument("--rounds", type=int, help="solve rounds (uniform refinement in between)")
    q.add_argument("--tol", type=float)
    q.add_argument("--count", type=int, help="Steklov pairs for the diagnostics")

    p = sub.add_parser("report", help="plots from a convergence report")
    rsub = p.add_subparsers(dest="action", required=True)
    q = rsub.add_parser("plot", parents=[common], argument_default=S,
                        help="self-contained SVG from report.json")
    q.add_argument("input", help="convergence report JSON")
    return parser


def resolve_config(command: str, ns: dict) -> dict:
    cfg = dict(DEFAULTS[command])
    if "config" in ns:
        data = _load_toml(ns["config"])
        section = data.get(command, {})
        flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
        for src in (flat, section):
            for key, val in src.items():
                key = key.replace("-", "_")
                if key not in cfg and key not in ("out", "jobs"):
                    raise UsageError(f"unknown option {key!r} in {ns['config']}")
                cfg[key] = val
    for key, val in ns.items():
        if key in ("command", "action", "config", "out", "log_level"):
            continue
        if key in cfg or key == "jobs":
            cfg[key] = val
    if "eps" in cfg and command != "report":
        cfg["eps"] = _eps_list(cfg["eps"])
    if "jobs" in cfg and cfg["jobs"] is not None and int(cfg["jobs"]) < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg


def output_dir(ns: dict, cfg_file: dict) -> Path:
    return Path(ns.get("out") or cfg_file.get("out") or os.environ.get(ENV_OUTPUT) or DEFAULT_OUTPUT)


def _emit_error(out: Optional[Path], payload: dict) -> None:
    text = json.dumps(_plain({"error": payload}), indent=1, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code or 0)
    ns = vars(args)
    command = ns["command"]
    logging.basicConfig(level=str(ns.get("log_level", "WARNING")).upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        cfg = resolve_config(command, ns)
        file_cfg = _load_toml(ns["config"]) if "config" in ns else {}
        out = output_dir(ns, file_cfg)
        if command == "report":
            cfg["input"] = ns.get("input", cfg.get("input"))
        run = Run(command if command not in ("fbms", "report") else f"{command} {ns['action']}",
                  cfg, out)
        return COMMANDS[command](cfg, run)
    except UsageError as exc:
        _emit_error(out, {"kind": "usage", "message": str(exc)})
        return 2
    except ComputeFailure as exc:
        _emit_error(out, {"kind": "compute", "module": exc.module, **exc.payload})
        return 1
    except Exception as exc:  # any module error is a compute failure
        module = type(exc).__module__.rsplit(".", 1)[-1]
        payload = {"kind": "compute", "module": module, "type": type(exc).__name__,
                   "message": str(exc)}
        for attr in ("diagnostics", "residuals"):
            if getattr(exc, attr, None) is not None:
                payload[attr] = getattr(exc, attr)
        _emit_error(out, payload)
        return 1


if __name__ == "__main__":
    sys.exit(main())
