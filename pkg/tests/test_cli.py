import json
import math

import numpy as np
import pytest

from slabcbs.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from slabcbs.output import Curve, emit_plot_data, format_number, write_json


def _run(tmp_path, *args, config=None):
    argv = ["--output-dir", str(tmp_path / "out"), *args]
    if config is not None:
        path = tmp_path / "run.cfg"
        path.write_text(config)
        argv = ["--config", str(path), *argv]
    return main(argv)


def test_linear_cbs_outputs(tmp_path, capsys):
    code = _run(tmp_path, "--scenario", "linear-cbs", "--check",
                config="n_cells = 40\nb = 4\nn_energy = 40\n")
    assert code == EXIT_OK
    assert "[PASS] linear reciprocity" in capsys.readouterr().out
    out = tmp_path / "out"
    csv = (out / "linear_cbs_profile.csv").read_bytes()
    assert b"\r" not in csv
    assert csv.splitlines()[0] == b"z,ladder_density,crossed_density"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["units"]["z"] == "l_dis"
    assert "convergence" in summary
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["config"]["b"] == 4.0
    assert set(manifest["files"]) == {"linear_cbs_profile.csv", "summary.json"}


def test_runs_are_byte_identical(tmp_path):
    cfg = "n_cells = 30\nb = 3\nn_energy = 20\nscenario = linear-cbs\n"
    for run in ("a", "b"):
        (tmp_path / run).mkdir()
        assert _run(tmp_path / run, config=cfg) == EXIT_OK
    for name in ("linear_cbs_profile.csv", "summary.json"):
        assert (tmp_path / "a/out" / name).read_bytes() == (tmp_path / "b/out" / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    assert _run(tmp_path, config="b = -3") == EXIT_CONFIG
    assert "b must be positive" in capsys.readouterr().err
    assert _run(tmp_path, config="colour = blue") == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_unknown_scenario_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit):
        _run(tmp_path, "--scenario", "fig11")


def test_solver_failure_exit_3(tmp_path):
    code = _run(tmp_path, "--scenario", "fig9a",
                config="b = 4\nn_cells = 20\nn_energy = 20\ne_max = 4\nmax_iters = 2\n")
    assert code == EXIT_SOLVER
    manifest = json.loads((tmp_path / "out/manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "ConvergenceError" in manifest["reason"]


def test_failed_check_exit_1(tmp_path, capsys):
    # a thin slab cannot thermalise
    code = _run(tmp_path, "--scenario", "fig9b", "--check",
                config="b = 2\nn_cells = 20\nn_energy = 20\ne_max = 4\n")
    assert code == EXIT_CHECK
    assert "[FAIL] thermal at z = L/4" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "out/manifest.json").read_text())
    assert manifest["status"] == "check_failed"


def test_kernel_dump(tmp_path):
    code = _run(tmp_path, "--scenario", "linear-cbs",
                config="n_cells = 20\nb = 2\nn_energy = 20\ndump_kernels = true\n")
    assert code == EXIT_OK
    head = (tmp_path / "out/kernel_f.csv").read_text().splitlines()[0]
    assert head == "E1,E2,E3,value"
    manifest = json.loads((tmp_path / "out/manifest.json").read_text())
    assert "kernel_g.csv" in manifest["files"]


def test_format_number():
    assert format_number(1 / 3) == "0.333333333333"
    assert format_number(-0.0) == "0"
    assert format_number(1e-20) == "1e-20"
    with pytest.raises(ValueError):
        format_number(math.nan)


def test_nan_curve_writes_nothing(tmp_path):
    good = Curve("good", ["x"], {"x": [1.0, 2.0]})
    bad = Curve("bad", ["x"], {"x": [1.0, np.nan]})
    with pytest.raises(ValueError, match="non-finite"):
        emit_plot_data([good, bad], tmp_path / "o")
    assert not (tmp_path / "o").exists()


def test_empty_curve_list(tmp_path):
    assert emit_plot_data([], tmp_path / "o") == {}


def test_ragged_curve_rejected(tmp_path):
    with pytest.raises(ValueError, match="lengths"):
        emit_plot_data([Curve("c", ["a", "b"], {"a": [1, 2], "b": [1]})], tmp_path)


def test_json_nan_becomes_null(tmp_path):
    write_json(tmp_path / "s.json", {"w": float("nan"), "v": np.float64(0.1 + 0.2)})
    data = json.loads((tmp_path / "s.json").read_text())
    assert data == {"v": 0.3, "w": None}
