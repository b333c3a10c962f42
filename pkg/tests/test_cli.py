import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rompc.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from rompc.model_io import load_design, save_problem

from conftest import scalar_problem


def _scalar_manifest(directory, b=1.0):
    problem = scalar_problem()
    problem.reduction = {"method": "basis", "V": np.eye(1), "W": np.eye(1)}
    if b != 1.0:
        from rompc.system import StateSpaceModel

        f = problem.fom
        problem.fom = StateSpaceModel(f.A, [[b]], f.C, f.H, f.B_w, dt=f.dt)
    path = directory / "manifest.json"
    save_problem(problem, str(path))
    return path


@pytest.fixture(scope="module")
def heat_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("heat")
    assert main(["make-benchmark", str(root / "bench"), "--n-full", "80", "--rom-dim", "8", "--tau", "150",
                 "--horizon", "10"]) == EXIT_OK
    manifest = root / "bench" / "manifest.json"
    assert main(["synth", str(manifest), "-o", str(root / "out")]) == EXIT_OK
    return manifest, root / "out"


def test_synth_writes_design_and_report(heat_run):
    _, out = heat_run
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok"
    assert report["rho_Aeps"] < 1
    assert set(report["checks"].values()) <= {"pass", "fail", "skipped", "waived"}
    design = load_design(str(out / "design.json"))
    assert design.rom.n == 8


def test_synth_skip_delta1_marks_waiver(tmp_path):
    manifest = _scalar_manifest(tmp_path)
    assert main(["synth", str(manifest), "-o", str(tmp_path / "out"), "--skip-delta1"]) == EXIT_OK
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["checks"]["delta1"] == "waived"
    assert report["bounds"]["delta1_waived"] is True


def test_synth_uncontrollable_fails_with_stage(tmp_path, capsys):
    manifest = _scalar_manifest(tmp_path, b=0.0)
    assert main(["synth", str(manifest), "-o", str(tmp_path / "out")]) == EXIT_FAIL
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["status"] == "failed" and report["stage"] == "gains"
    assert "controllab" in capsys.readouterr().err


def test_synth_missing_manifest_is_usage_error(tmp_path):
    assert main(["synth", str(tmp_path / "nope.json"), "-o", str(tmp_path / "out")]) == EXIT_USAGE


def test_simulate_zero_disturbance_zero_setpoint(tmp_path):
    manifest = _scalar_manifest(tmp_path)
    assert main(["synth", str(manifest), "-o", str(tmp_path / "out")]) == EXIT_OK
    sim = tmp_path / "sim"
    code = main(["simulate", str(tmp_path / "out" / "design.json"), str(manifest), "-o", str(sim),
                 "--disturbance", "zero", "--setpoint", "0", "--steps", "20", "--runs", "1"])
    assert code == EXIT_OK
    rows = list(csv.DictReader((sim / "run_0000.csv").open()))
    assert len(rows) == 2 * 30 + 20
    assert all(float(r["z_1"]) == 0.0 and float(r["u_1"]) == 0.0 for r in rows)
    summary = json.loads((sim / "summary.json").read_text())
    assert summary["ok"] and summary["z_violations"] == 0


def test_simulate_heat_mixed_policies(heat_run, tmp_path):
    manifest, out = heat_run
    code = main(["simulate", str(out / "design.json"), str(manifest), "-o", str(tmp_path), "--runs", "2",
                 "--steps", "40", "--disturbance", "mixed", "--format", "json", "--seed", "3"])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["per_policy"]["uniform"]["runs"] == 1 and summary["per_policy"]["vertex"]["runs"] == 1
    assert len(json.loads((tmp_path / "run_0000.json").read_text())) == 300 + 40


def test_simulate_dimension_mismatch_is_usage_error(heat_run, tmp_path):
    _, out = heat_run
    manifest = _scalar_manifest(tmp_path)
    code = main(["simulate", str(out / "design.json"), str(manifest), "-o", str(tmp_path / "sim")])
    assert code == EXIT_USAGE


def test_bounds_with_new_tau(heat_run, tmp_path):
    manifest, out = heat_run
    assert main(["bounds", str(manifest), str(out / "design.json"), "-o", str(tmp_path), "--tau", "200"]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["bounds"]["tau"] == 200


def test_report_rendering(heat_run, capsys):
    _, out = heat_run
    assert main(["report", str(out / "report.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "spectral radius" in text and "delta_z" in text
    assert main(["report", str(out / "design.json"), "--format", "json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["rho_Aeps"] < 1


def test_bad_flag_exit_code():
    proc = subprocess.run([sys.executable, "-m", "rompc", "synth"], capture_output=True)
    assert proc.returncode == EXIT_USAGE
