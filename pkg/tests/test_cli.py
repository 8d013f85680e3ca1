import json
import subprocess
import sys

import numpy as np
import pytest

from verigeo.cli import DEFAULTS, SUBCOMMANDS, config_digest, main


@pytest.fixture(scope="module")
def field_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--n", "150", "--sigma-a", "50",
                 "--seed", "3"]) == 0
    return out / "simulated.csv"


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_bounds_prints_normal_iqr(capsys):
    assert main(["bounds", "--qe", "1.0"]) == 0
    assert capsys.readouterr().out.split("\n")[:2] == ["C_l = 1.3490", "C_u = 1.3490"]


def test_help_exits_zero(capsys):
    for cmd in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_unknown_subcommand_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_malformed_config_reports_line(tmp_path, field_csv, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("veracity:\n  alpha: [1, 2\n")
    assert main(["score", str(field_csv), "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "line" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, field_csv, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("veracity:\n  alpah: 1.0\n")
    assert main(["score", str(field_csv), "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "veracity.alpah" in capsys.readouterr().err


def test_missing_input_exits_one(tmp_path):
    assert main(["score", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 1


def test_score_and_manifest(tmp_path, field_csv, capsys):
    out = tmp_path / "s"
    assert main(["score", str(field_csv), "--out", str(out), "--design",
                 "intercept,coord_x,coord_y,surface"]) == 0
    m = _manifest(out)
    assert m["artifact_paths"] == ["scores.csv"]
    assert m["config_digest"] == config_digest(m["config"])
    header = (out / "scores.csv").read_text().splitlines()[0].split(",")
    assert header[-3:] == ["vs", "n_neighbors", "sparse"]
    log = [json.loads(line) for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    assert log and log[0]["stage"] == "score"


def test_config_file_and_flag_override(tmp_path, field_csv):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("veracity:\n  alpha: 0.5\n  delta: 2.0\n")
    out = tmp_path / "o"
    assert main(["score", str(field_csv), "--config", str(cfg), "--alpha", "0.25",
                 "--out", str(out)]) == 0
    v = _manifest(out)["config"]["veracity"]
    assert (v["alpha"], v["delta"]) == (0.25, 2.0)


@pytest.mark.parametrize("method", ["ols", "vs", "egls"])
def test_fit(tmp_path, field_csv, method):
    out = tmp_path / method
    args = ["fit", str(field_csv), "--method", method, "--out", str(out),
            "--design", "intercept,coord_x,coord_y,surface", "--n-starts", "2"]
    assert main(args) == 0
    res = json.loads((out / "fit.json").read_text())
    assert len(res["beta"]) == 4


def test_smooth_variogram_krige_crossval(tmp_path, field_csv):
    d = ["--design", "intercept,coord_x,coord_y,surface", "--n-starts", "2"]
    assert main(["smooth", str(field_csv), "--out", str(tmp_path / "sm"), *d[:2]]) == 0
    assert main(["variogram", str(field_csv), "--out", str(tmp_path / "vg"), *d]) == 0
    vg = json.loads((tmp_path / "vg" / "variogram.json").read_text())
    assert vg["model"]["family"] == "exponential"
    targets = tmp_path / "t.csv"
    targets.write_text("x,y,surface\n1.0,1.0,0.0\n2.5,3.0,1.0\n")
    assert main(["krige", str(field_csv), "--targets", str(targets),
                 "--out", str(tmp_path / "kr"), *d]) == 0
    rows = (tmp_path / "kr" / "predictions.csv").read_text().splitlines()
    assert len(rows) == 3
    assert main(["crossval", str(field_csv), "--exclude", ",".join(map(str, range(5, 150))),
                 "--out", str(tmp_path / "cv"), *d]) == 0
    cv = json.loads((tmp_path / "cv" / "crossval.json").read_text())
    assert len(cv["per_point"]) == 5


def test_byte_identical_reruns(tmp_path):
    for tag in ("a", "b"):
        assert main(["simulate", "--out", str(tmp_path / tag), "--n", "80", "--seed", "5"]) == 0
    for name in ("simulated.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_experiment_tiny(tmp_path):
    cfg = tmp_path / "e.yaml"
    cfg.write_text("experiment:\n  cells:\n    - {n: 100, sigma_A: 50, alpha_M: 2, q_e: 0.9}\n"
                   "  estimators: [med_vs, ols]\n  covariance_methods: [vs]\n")
    out = tmp_path / "e"
    assert main(["experiment", "--config", str(cfg), "--replications", "2", "--n-starts", "2",
                 "--out", str(out)]) == 0
    assert sorted(_manifest(out)["artifact_paths"]) == [
        "covariance_mse.csv", "experiment.json", "regression_mse.csv"]


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "verigeo.cli", "bounds", "--qe", "0.5"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith("C_l = 0.0000")


def test_defaults_cover_config_blocks():
    assert {"seed", "data", "veracity", "variogram", "experiment"} <= set(DEFAULTS)
