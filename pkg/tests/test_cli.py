import json
import subprocess
import sys

import pytest

from stekhom.cli import config_hash, main


def run(*args):
    return main([str(a) for a in args])


def load(p):
    return json.loads(p.read_text())


def test_sample_writes_manifest(tmp_path):
    out = tmp_path / "s"
    assert run("sample", "--model", "torus", "--eps", "0.25", "--out", out) == 0
    man = load(out / "manifest.json")
    names = {a["path"] for a in man["artifacts"]}
    assert names == {"separated_set.json", "cells.csv", "sample_summary.json"}
    assert man["seeds"] == {"sampling": 1}
    assert man["kernel_backend"] in ("cython", "python")
    summary = load(out / "sample_summary.json")
    assert summary["config_hash"] == man["config_hash"]
    assert summary["partition_defect"] < 1e-10


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("STEKHOM_OUTPUT_DIR", str(tmp_path / "env"))
    assert run("sample", "--model", "sphere", "--eps", "0.5") == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('seed = 4\n[sample]\nmodel = "sphere"\neps = 0.5\n')
    assert run("sample", "--config", cfg, "--eps", "0.45", "--out", tmp_path / "o") == 0
    man = load(tmp_path / "o" / "manifest.json")
    assert man["config"]["seed"] == 4 and man["config"]["eps"] == [0.45]
    assert man["config"]["model"] == "sphere"


@pytest.mark.parametrize("args", [
    ["report", "plot", "missing.json"],
    ["sample", "--eps", "-1"],
    ["sample", "--model", "klein"],
    ["sample", "--beta", "import os"],
    ["converge", "--eps", "0.2,0.3"],
    ["converge", "--jobs", "0"],
    ["perforate", "--boundary-segments", "2"],
    ["fbms", "run", "--symmetry", "tetrahedral", "--boundary", "6"],
    ["fbms", "run", "--symmetry", "dodecagonal"],
    ["solve", "--problem", "wave"],
    ["solve", "--mesh", "nope.off"],
    ["sample", "--config", "nope.toml"],
])
def test_usage_errors_exit_2(tmp_path, capsys, args):
    assert run(*args, "--out", tmp_path) == 2
    assert json.loads(capsys.readouterr().err)["error"]["kind"] == "usage"


def test_unknown_command_exit_2():
    assert run("nonsense") == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("bogus = 1\n")
    assert run("sample", "--config", cfg, "--out", tmp_path) == 2


def test_compute_error_exit_1(tmp_path, capsys):
    assert run("sample", "--model", "sphere", "--eps", "0.001", "--out", tmp_path) == 1
    err = json.loads(capsys.readouterr().err)["error"]
    assert err["kind"] == "compute" and err["module"] == "sampling"
    assert load(tmp_path / "error.json")["error"] == err


def test_solve_disk_and_sphere(tmp_path):
    assert run("solve", "--problem", "steklov", "--model", "disk", "--rings", 30,
               "--out", tmp_path / "d") == 0
    d = load(tmp_path / "d" / "spectrum.json")
    assert d["eigenvalues"][1] == pytest.approx(1.0, rel=0.01)
    assert run("solve", "--model", "sphere", "--level", 4, "--out", tmp_path / "s") == 0
    s = load(tmp_path / "s" / "spectrum.json")
    assert s["Lambda"][1] == pytest.approx(8 * 3.141592653589793, rel=0.01)


def test_perforate_then_solve(tmp_path):
    assert run("perforate", "--model", "sphere", "--eps", "0.6", "--out", tmp_path / "p") == 0
    assert run("solve", "--problem", "steklov", "--mesh", tmp_path / "p" / "domain.off",
               "--count", 3, "--eigenvectors", "--out", tmp_path / "q") == 0
    sp = load(tmp_path / "q" / "spectrum.json")
    assert sp["eigenvalues"][0] == 0.0 and sp["Sigma"][1] < 8 * 3.1416
    assert (tmp_path / "q" / "eigenvectors.npy").exists()
    side = load(tmp_path / "p" / "domain.off.json")
    assert side["config_hash"] == load(tmp_path / "p" / "manifest.json")["config_hash"]


def test_converge_reproducible_and_plotted(tmp_path):
    args = ["converge", "--model", "torus", "--eps", "0.3,0.25", "--k", "1"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    for name in ("report.json", "report.csv", "report.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    svg = (tmp_path / "a" / "report.svg").read_text()
    assert "<svg" in svg and "xlink:href=\"http" not in svg
    h = load(tmp_path / "a" / "manifest.json")["config_hash"]
    assert h in svg and load(tmp_path / "a" / "report.json")["config_hash"] == h
    assert run("report", "plot", tmp_path / "a" / "report.json", "--out", tmp_path / "r") == 0
    assert (tmp_path / "r" / "report.svg").exists()


def test_report_plot_rejects_non_report(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert run("report", "plot", p, "--out", tmp_path) == 2


def test_fbms_run(tmp_path):
    assert run("fbms", "run", "--symmetry", "tetrahedral", "--boundary", 4, "--rounds", 2,
               "--out", tmp_path) == 0
    d = load(tmp_path / "fbms.json")
    assert d["boundary_components"] == 4 and d["verdict"] in ("pass", "inconclusive")
    assert (tmp_path / "surface.off").read_text().startswith("OFF")
    assert load(tmp_path / "surface.off.json")["config_hash"] == d["config_hash"]


def test_config_hash_is_canonical():
    assert config_hash("a", {"x": 1, "y": 2}) == config_hash("a", {"y": 2, "x": 1})
    assert config_hash("a", {"x": 1}) != config_hash("b", {"x": 1})


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "stekhom.cli", "--version"], capture_output=True,
                         text=True)
    assert out.returncode == 0 and "stekhom" in out.stdout
