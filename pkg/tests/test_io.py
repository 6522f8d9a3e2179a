"""VTK output, the case runner, run comparison and the command line."""

import json

import meshio
import numpy as np
import pytest

from discstrain.cli import DEMO_COLUMNS, main
from discstrain.compare import CompareError, compare_runs, envelope_energy, relative_difference, unload_slopes
from discstrain.config import load_config, parse_config
from discstrain.fem import rectangle
from discstrain.runner import CURVE_COLUMNS, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, read_curve, run_case
from discstrain.vtk import cell_average, nodal_average, write_vtk
from helpers import bar_config, write_config


# -- vtk --------------------------------------------------------------------


def test_vtk_parses_in_reference_reader(tmp_path):
    m = rectangle(2.0, 1.0, 2, 2)
    tri = rectangle(2.0, 1.0, 1, 1, triangles=True)
    for mesh in (m, tri):
        damage = np.linspace(0.0, 0.9, mesh.n_elements)
        disp = np.column_stack([np.arange(mesh.n_nodes), -np.arange(mesh.n_nodes)]) * 1e-3
        write_vtk(tmp_path / "f.vtk", mesh, {"damage": damage, "k": damage * 2},
                  {"displacement": disp, "damage": nodal_average(mesh, damage)})
        back = meshio.read(tmp_path / "f.vtk")
        assert back.points.shape == (mesh.n_nodes, 3)
        assert np.allclose(np.concatenate(back.cell_data["damage"]).ravel(), damage)
        assert np.allclose(back.point_data["displacement"][:, :2], disp)
        assert back.point_data["damage"].shape[0] == mesh.n_nodes


def test_vtk_rejects_wrong_shape(tmp_path):
    m = rectangle(1.0, 1.0, 1, 1)
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "f.vtk", m, {"damage": np.zeros(3)})


def test_cell_average():
    m = rectangle(2.0, 1.0, 2, 1)
    pts = np.array([0, 0, 0, 4.0, 1, 1, 1, 1])
    assert np.allclose(cell_average(m, pts), [1.0, 1.0])
    assert np.allclose(cell_average(m, pts, np.max), [4.0, 1.0])


# -- compare helpers ----------------------------------------------------------


def test_relative_difference():
    assert relative_difference(0.0, 0.0) == 0.0
    assert relative_difference(100.0, 80.0) == pytest.approx(0.2)


def test_envelope_energy_skips_unloading():
    cmod = np.array([0.0, 1.0, 2.0, 1.0, 2.0, 3.0])
    force = np.array([0.0, 2.0, 2.0, 0.0, 2.0, 2.0])
    assert envelope_energy(cmod, force) == pytest.approx(1.0 + 2.0 + 2.0)


def test_unload_slopes():
    u = np.array([0.0, 1.0, 2.0, 1.5, 1.0, 2.0])
    c = np.array([0.0, 1.0, 2.0, 1.5, 1.0, 2.0])
    f = np.array([0.0, 5.0, 6.0, 4.0, 2.0, 6.0])
    assert unload_slopes(u, c, f) == pytest.approx([4.0])


# -- runner -----------------------------------------------------------------


@pytest.fixture(scope="module")
def bar_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("bar")
    # the two left-edge nodes act as the gauge, so opening tracks lateral contraction
    cfg = load_config(write_config(root / "bar.yaml", bar_config(gauge="left")))
    code = run_case(cfg, root / "out")
    return code, root / "out", cfg


def test_run_artifacts(bar_run):
    code, out, _ = bar_run
    assert code == EXIT_OK
    assert (out / "curve.csv").read_text().splitlines()[0] == ",".join(CURVE_COLUMNS)
    curve = read_curve(out / "curve.csv")
    assert curve["step"][0] == 0 and np.all(np.diff(curve["time"]) > 0)
    assert np.all(np.diff(curve["newton_iters_cum"]) >= 0)
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["status"] == "completed"
    assert meta["derived"]["alpha_min"] > 0 and meta["derived"]["length_max_mm"] == pytest.approx(156.25)
    assert meta["totals"]["newton_iterations"] == int(curve["newton_iters_cum"][-1])
    assert meta["field_files"] == ["fields_00_t1.vtk", "fields_01_final.vtk"]
    for name in meta["field_files"]:
        grid = meshio.read(out / name)
        for array in ("damage", "damage_max", "k", "crack_opening"):
            assert array in grid.cell_data
    assert not (out / "error.json").exists()


def test_rerun_from_meta_is_bit_identical(bar_run, tmp_path):
    _, out, _ = bar_run
    meta = json.loads((out / "run_meta.json").read_text())
    cfg = parse_config(meta["config"])
    assert run_case(cfg, tmp_path / "again") == EXIT_OK
    assert (tmp_path / "again" / "curve.csv").read_bytes() == (out / "curve.csv").read_bytes()


def test_validation_failure_writes_error(tmp_path):
    data = bar_config()
    data["mesh"]["params"] = {"width": 400.0, "height": 200.0, "nx": 2, "ny": 1}
    cfg = load_config(write_config(tmp_path / "c.yaml", data))
    assert run_case(cfg, tmp_path / "out") == EXIT_VALIDATION
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["kind"] == "validation" and err["field"] == "mesh"


def test_solver_failure_flushes_partial_history(tmp_path):
    data = bar_config()
    data["solver"] = {"max_iterations": 1}
    data["program"] = {"times": [0, 1], "values": [0.0, 0.01], "initial_increment": 0.5,
                       "min_increment": 0.2, "max_retries": 1}
    cfg = load_config(write_config(tmp_path / "c.yaml", data))
    assert run_case(cfg, tmp_path / "out") == EXIT_SOLVER
    err = json.loads((tmp_path / "out" / "error.json").read_text())
    assert err["kind"] == "solver"
    curve = read_curve(tmp_path / "out" / "curve.csv")
    assert curve["step"].size >= 1
    meta = json.loads((tmp_path / "out" / "run_meta.json").read_text())
    assert meta["status"] == "solver_failure"
    assert meta["field_files"][-1].endswith("partial.vtk")


# -- compare ----------------------------------------------------------------


def test_compare_with_itself_is_zero(bar_run):
    _, out, _ = bar_run
    rep = compare_runs(out, out)
    assert rep.peak_difference == 0.0 and rep.energy_difference == 0.0
    assert rep.slope_ratios and all(r == 1.0 for r in rep.slope_ratios)
    assert rep.verdict == "objective"
    assert "verdict: objective" in rep.to_text()


def test_compare_rejects_different_programs(bar_run, tmp_path):
    _, out, _ = bar_run
    data = bar_config()
    data["program"]["values"] = [0.0, 0.001, 0.0]
    cfg = load_config(write_config(tmp_path / "c.yaml", data))
    run_case(cfg, tmp_path / "other")
    with pytest.raises(CompareError):
        compare_runs(out, tmp_path / "other")
    with pytest.raises(CompareError):
        compare_runs(out, tmp_path / "missing")


# -- command line -------------------------------------------------------------


def test_cli_validate(tmp_path, capsys):
    good = write_config(tmp_path / "good.yaml", bar_config())
    assert main(["validate", str(good)]) == 0
    data = bar_config()
    data["material"]["d_c"] = 1.5
    bad = write_config(tmp_path / "bad.yaml", data)
    assert main(["validate", str(bad)]) == 2
    assert "material.d_c" in capsys.readouterr().err


def test_cli_run_and_compare(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path / "c.yaml", bar_config())
    monkeypatch.setenv("DISCSTRAIN_OUTPUT_DIR", str(tmp_path / "env_out"))
    assert main(["run", str(cfg)]) == 0
    assert (tmp_path / "env_out" / "curve.csv").exists()
    assert main(["run", str(cfg), "-o", str(tmp_path / "b")]) == 0
    assert main(["compare", str(tmp_path / "env_out"), str(tmp_path / "b"), "--json", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["verdict"] == "objective"
    assert main(["compare", str(tmp_path / "env_out"), str(tmp_path / "nope")]) == 2


def test_cli_run_invalid_config_exits_2(tmp_path):
    data = bar_config()
    data["material"]["d_c"] = 1.5
    bad = write_config(tmp_path / "bad.yaml", data)
    assert main(["run", str(bad), "-o", str(tmp_path / "o")]) == 2
    assert json.loads((tmp_path / "o" / "error.json").read_text())["field"] == "material.d_c"


@pytest.mark.parametrize("flag", [[], ["--no-discontinuity"]])
def test_cli_demo1d(tmp_path, flag):
    out = tmp_path / "demo.csv"
    assert main(["demo1d", "--ell", "30", "-o", str(out), *flag]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(DEMO_COLUMNS)
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    eps, ep, ed, ee = rows[:, 1], rows[:, 4], rows[:, 5], rows[:, 6]
    assert np.allclose(eps, ee + ep + ed, atol=1e-15)
    assert (np.max(ed) > 0) == (not flag)


def test_cli_demo1d_rejects_length_above_bound(tmp_path):
    assert main(["demo1d", "--ell", "200", "-o", str(tmp_path / "d.csv")]) == 2
