import json
import os
import subprocess
import sys

import numpy as np
import pytest

from glucokin.cli import main, parse_time
from glucokin.identifiability import worker_count
from glucokin.io import load_experiment, load_trajectory
from glucokin.models import Family, ModelSpec

FLAGS = ("--model", "--experiment", "--params", "--optimizer", "--step", "--delta",
         "--alpha", "--split", "--seed", "--out", "--grid-points", "--grid-span",
         "--sv-threshold", "--sv-gap")

ZERO_EXPERIMENT = """\
[meta]
model_family = reduced
time_unit = h
[glucose]
0,1
1,1
[initial]
G,0
i1_bar,0
i2,0
H_bar,0
h1,0
xi_bar,0
"""


@pytest.fixture(scope="module")
def synthetic(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--model", "reduced", "--seed", "7", "--out", str(out)]) == 0
    return out


def test_generate_is_byte_identical(synthetic, tmp_path):
    assert main(["generate", "--model", "reduced", "--seed", "7", "--out", str(tmp_path)]) == 0
    for name in ("synthetic.exp", "truth.json"):
        assert (tmp_path / name).read_bytes() == (synthetic / name).read_bytes()
    assert main(["generate", "--model", "reduced", "--seed", "8", "--out",
                 str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "synthetic.exp").read_bytes() != (synthetic / "synthetic.exp").read_bytes()


def test_fit_writes_ten_parameters(synthetic, tmp_path):
    code = main(["fit", "--experiment", str(synthetic / "synthetic.exp"), "--params",
                 str(synthetic / "truth.json"), "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "fit.json").read_text())
    assert len(doc["params"]) == 10
    assert doc["mse"] > 0 and doc["n"] == 97
    traj = load_trajectory(tmp_path / "fit_trajectory.csv", ModelSpec(Family.REDUCED, doc["constants"]))
    assert traj.times[-1] == pytest.approx(8 / 24)


def test_simulate_zero_input_is_constant(tmp_path):
    exp = tmp_path / "zero.exp"
    exp.write_text(ZERO_EXPERIMENT)
    assert main(["simulate", "--experiment", str(exp), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,G,i1_bar,i2,H_bar,h1,xi_bar"
    rows = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.all(rows[:, 1:] == 0.0)


def test_predict_and_jacobi(synthetic, tmp_path):
    code = main(["predict", "--experiment", str(synthetic / "synthetic.exp"), "--params",
                 str(synthetic / "truth.json"), "--split", "4h", "--out", str(tmp_path)])
    assert code == 0
    doc = json.loads((tmp_path / "predict.json").read_text())
    assert doc["n_first"] + doc["n_second"] == 97
    assert main(["jacobi", "--model", "complete", "--out", str(tmp_path)]) == 0
    jac = json.loads((tmp_path / "jacobi.json").read_text())
    assert max(jac["six"]["residuals"]) < 1e-10


def test_svd_and_profile_small(tmp_path):
    exp = tmp_path / "short.exp"
    exp.write_text("[meta]\nmodel_family = glucagon_sub\ntime_unit = h\n[glucose]\n"
                   + "".join(f"{k * 0.25},{8 - 0.1 * k}\n" for k in range(9))
                   + "[boluses]\n0.5,glucagon_ip,50\n")
    assert main(["svd", "--experiment", str(exp), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "svd_spectra.csv").read_text().startswith("label,index")
    code = main(["profile", "--experiment", str(exp), "--grid-points", "3",
                 "--out", str(tmp_path)])
    assert code == 0
    summary = json.loads((tmp_path / "profiles.json").read_text())
    assert len(summary["profiles"]) == 8
    assert (tmp_path / "profile_k1.csv").read_text().count("\n") == 4


@pytest.mark.parametrize("argv,code", [
    (["fit"], 2),
    (["fly"], 2),
    (["fit", "--experiment", "missing.exp"], 2),
    (["predict", "--model", "reduced"], 2),
    (["simulate", "--model", "reduced", "--step", "fast"], 2),
    (["profile", "--grid-points", "1"], 2),
    (["jacobi", "--model", "reduced"], 2),
])
def test_usage_errors(argv, code, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] in
                ("fit", "predict", "simulate", "profile", "jacobi") else argv) == code


def test_bad_input_exits_one(tmp_path):
    exp = tmp_path / "bad.exp"
    exp.write_text("[meta]\nmodel_family = reduced\n[glucose]\n0,8\n0,7\n")
    assert main(["simulate", "--experiment", str(exp), "--out", str(tmp_path)]) == 1


def test_time_parsing():
    assert parse_time("30min") == 30 / 1440
    assert parse_time("4h") == 4 / 24
    assert parse_time("0.5") == 0.5
    assert parse_time("2d") == 2.0


def test_threads_environment(monkeypatch):
    monkeypatch.setenv("GLUCOKIN_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("GLUCOKIN_THREADS", "junk")
    assert worker_count() == 1
    assert worker_count(2) == 2


def test_help_lists_flags():
    proc = subprocess.run([sys.executable, "-m", "glucokin", "fit", "--help"],
                          capture_output=True, text=True, check=True)
    for flag in FLAGS:
        assert flag in proc.stdout
    top = subprocess.run([sys.executable, "-m", "glucokin", "--help"], capture_output=True,
                         text=True, check=True)
    for cmd in ("simulate", "generate", "fit", "profile", "svd", "jacobi", "predict"):
        assert cmd in top.stdout


def test_generated_experiment_loads(synthetic):
    ds = load_experiment(synthetic / "synthetic.exp")
    assert ds.n == 97 and ds.subject_id == "synthetic-7"
