import json
import subprocess
import sys

import pytest

from capflow.cli import main

HALF = ["--a", "1", "--b", "0.5", "--r", "0.5"]
SMALL = ["--n-phi", "16", "--n-theta", "16", "--n-theta-fe", "100"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_stationary_halfsphere(capsys, tmp_path):
    code, out, _ = run(capsys, "stationary", *HALF, "--out", str(tmp_path))
    assert code == 0
    data = json.loads((tmp_path / "stationary.json").read_text())
    assert data == json.loads(out)
    text = json.dumps(data)
    assert "1.5707963267948966" in text


def test_stationary_from_angle(capsys, tmp_path):
    code, out, _ = run(capsys, "stationary", "--a", "0.5", "--b", "0.3", "--alpha", "1.3181160716528182", "--out", str(tmp_path))
    assert code == 0 and "0.4000000000000000" in out


def test_infeasible_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "stationary", "--a", "2", "--b", "1", "--r", "2", "--out", str(tmp_path))
    assert code == 2
    assert json.loads(err)["error"] == "NoStationaryCap"


@pytest.mark.parametrize(
    "argv",
    [
        ["stationary", "--a", "1", "--b", "0.5"],
        ["stationary", *HALF, "--alpha", "1.0"],
        ["evolve", *HALF, "--perturbation", "random"],
        ["spectrum", *HALF, "--n-theta", "0"],
        ["evolve", *HALF, "--dt", "-1"],
    ],
)
def test_config_errors(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 2 and json.loads(err)["error"] == "ConfigError"


def test_homotopy_needs_halfsphere(capsys, tmp_path):
    code, _, err = run(capsys, "homotopy", "--a", "0.5", "--b", "0.3", "--r", "0.4", "--out", str(tmp_path))
    assert code == 2 and json.loads(err)["error"] == "NotHalfsphere"


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"a": 0.5, "b": 0.3, "r": 0.4, "k_max": 3, "n_theta_fe": 80}))
    code, out, _ = run(capsys, "spectrum", "--config", str(cfg), "--k-max", "2", "--out", str(tmp_path))
    assert code == 0
    data = json.loads(out)
    assert sorted(data["modes"]) == ["0", "1", "2"]
    assert data["nullspace_dim"] == 3 and data["min_positive"] > 0
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "spectrum", "--config", str(bad))[0] == 2


def test_spectrum_outputs_are_byte_identical(capsys, tmp_path):
    for d in ("one", "two"):
        assert run(capsys, "spectrum", *HALF, *SMALL, "--reference", "--out", str(tmp_path / d))[0] == 0
    for name in ("spectrum.csv", "spectrum.json", "reference.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_nullspace_and_scan(capsys, tmp_path):
    code, out, _ = run(capsys, "nullspace", "--a", "0.5", "--b", "0.3", "--r", "0.4", *SMALL, "--out", str(tmp_path))
    assert code == 0 and (tmp_path / "nullspace.csv").exists()
    code, out, _ = run(capsys, "scan", "--a-list=-2,0.5", "--b-list", "0.3", "--n-theta-fe", "60", "--k-max", "2", "--out", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert len(lines) == 3 and "NoStationaryCap" in lines[1]
    code, _, _ = run(capsys, "scan", "--a-list=-2", "--b-list", "0.3", "--out", str(tmp_path))
    assert code == 5


def test_homotopy(capsys, tmp_path):
    code, out, _ = run(capsys, "homotopy", *HALF, "--n-theta-fe", "80", "--k-max", "2", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "homotopy.csv").exists()


def test_evolve_zero_is_stationary(capsys, tmp_path):
    code, out, _ = run(capsys, "evolve", "--a", "0.5", "--b", "0.3", "--r", "0.4", "--n-phi", "16", "--n-theta", "16",
                       "--perturbation", "zero", "--T-end", "0.01", "--out", str(tmp_path))
    data = json.loads(out)
    assert code == 0 and data["status"] == "stationary"
    assert (tmp_path / "trajectory.csv").exists() and (tmp_path / "summary.json").exists()


def test_evolve_rejected_exit_code(capsys, tmp_path):
    code, out, _ = run(capsys, "evolve", "--a", "0.5", "--b", "0.3", "--r", "0.4", "--n-phi", "16", "--n-theta", "16",
                       "--T-end", "0.1", "--dt", "0.01", "--scheme", "euler", "--out", str(tmp_path))
    assert code == 4


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "capflow", "stationary", *HALF, "--out", str(tmp_path)],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)
