import csv
import json
import os
import subprocess
import sys
from importlib import resources

import jsonschema
import numpy as np
import pytest
from referencing import Registry, Resource

from l2ereg.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


def _schema(name):
    return json.loads(resources.files("l2ereg").joinpath("schemas", name).read_text())


REGISTRY = Registry().with_resources(
    (s["$id"], Resource.from_contents(s))
    for s in (_schema(n) for n in ("manifest.schema.json", "fit_result.schema.json", "truth.schema.json"))
)


def validate(doc, name):
    schema = _schema(name)
    jsonschema.Draft202012Validator(schema, registry=REGISTRY).validate(doc)


def _json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _simulate(out, *args):
    assert main(["simulate", "--out-dir", str(out), *args]) == EXIT_OK
    return os.path.join(out, "dataset.csv")


def test_simulate_outputs(tmp_path):
    out = tmp_path / "sim"
    path = _simulate(out, "--generator", "cubic", "--n", "50", "--outliers", "5", "--seed", "3")
    assert sorted(os.listdir(out)) == ["dataset.csv", "manifest.json", "truth.json"]
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "y"] and len(rows) == 51
    truth = _json(out / "truth.json")
    validate(truth, "truth.schema.json")
    assert len(truth["outlier_indices"]) == 5 and len(truth["f_values"]) == 50
    manifest = _json(out / "manifest.json")
    validate(manifest, "manifest.schema.json")
    assert manifest["command"] == "simulate" and manifest["seed"] == 3


def test_simulate_is_byte_reproducible(tmp_path):
    a = _simulate(tmp_path / "a", "--generator", "linear", "--n", "30", "--p", "3", "--outliers", "3")
    b = _simulate(tmp_path / "b", "--generator", "linear", "--n", "30", "--p", "3", "--outliers", "3")
    assert open(a, "rb").read() == open(b, "rb").read()


@pytest.mark.parametrize("constraint", ["none", "l1:0.01", "l1ball:5", "isotonic", "convex"])
def test_fit_writes_valid_document(tmp_path, constraint):
    gen = "quartic" if constraint == "convex" else "cubic" if constraint == "isotonic" else "linear"
    data = _simulate(tmp_path / "data", "--generator", gen, "--n", "60", "--outliers", "4", "--p", "3")
    out = tmp_path / "fit"
    code = main(["fit", "--input", data, "--constraint", constraint, "--residuals", "--out-dir", str(out)])
    assert code == EXIT_OK
    doc = _json(out / "fit.json")
    validate(doc, "fit_result.schema.json")
    assert doc["n"] == 60 and len(doc["fitted"]) == 60
    trace = np.array(doc["objective_trace"])
    assert np.all(np.diff(trace) <= 1e-10)
    with open(out / "residuals.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["fitted", "residual", "weight", "outlier"] and len(rows) == 61
    assert doc["manifest"]["inputs"] == _json(out / "manifest.json")["inputs"]


def test_fit_recovers_coefficients_on_original_scale(tmp_path):
    data = _simulate(tmp_path / "d", "--generator", "linear", "--n", "300", "--p", "3", "--outliers", "30")
    truth = _json(tmp_path / "d" / "truth.json")
    out = tmp_path / "fit"
    assert main(["fit", "--input", data, "--out-dir", str(out)]) == EXIT_OK
    doc = _json(out / "fit.json")
    np.testing.assert_allclose(doc["coefficients"], truth["beta_star"], atol=0.2)
    assert abs(doc["intercept"]) < 0.2
    assert doc["tau"] == pytest.approx(1.0, abs=0.2)
    assert set(truth["outlier_indices"]) <= set(doc["outlier_indices"])


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("L2EREG_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--n", "10"]) == EXIT_OK
    assert os.path.isfile(tmp_path / "env" / "dataset.csv")


def test_outputs_stay_inside_out_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    data = _simulate(tmp_path / "d", "--n", "40")
    before = set(os.listdir(tmp_path))
    assert main(["fit", "--input", data, "--constraint", "isotonic", "--out-dir", "o"]) == EXIT_OK
    assert set(os.listdir(tmp_path)) == before | {"o"}
    assert sorted(os.listdir(tmp_path / "o")) == ["fit.json", "manifest.json"]


def test_exit_codes(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["fit"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n3,oops\n")
    assert main(["fit", "--input", str(bad), "--out-dir", str(tmp_path)]) == EXIT_DATA
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == EXIT_DATA
    good = _simulate(tmp_path / "d", "--generator", "linear", "--n", "20", "--p", "2")
    assert main(["fit", "--input", good, "--constraint", "ridge", "--out-dir", str(tmp_path)]) == EXIT_USAGE
    # two covariates cannot serve as sites for a shape constraint
    assert main(["fit", "--input", good, "--constraint", "isotonic", "--out-dir", str(tmp_path)]) == EXIT_DATA
    assert main(["fit", "--input", good, "--response", "zz", "--out-dir", str(tmp_path)]) == EXIT_DATA
    code = main(["fit", "--input", good, "--step-beta", "1e308", "--out-dir", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert main(["simulate", "--n", "5", "--outliers", "9", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_constant_column_is_data_error(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("a,b,y\n1,2,3\n1,3,4\n1,5,6\n")
    assert main(["fit", "--input", str(p), "--out-dir", str(tmp_path)]) == EXIT_DATA


def test_benchmark_command(tmp_path):
    args = ["benchmark", "--generator", "quartic", "--n", "50", "--levels", "0,5", "--trials", "2", "--seed", "4"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--workers", "2", "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "benchmark.csv").read_bytes()
    assert a == (tmp_path / "b" / "benchmark.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "estimator,outlier_level,trial,mse" and len(lines) == 1 + 2 * 2 * 2
    validate(_json(tmp_path / "a" / "manifest.json"), "manifest.schema.json")
    assert main(["benchmark", "--trials", "0", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_path_command(tmp_path):
    out = tmp_path / "p"
    assert main(["path", "--n", "100", "--p", "4", "--grid", "6", "--out-dir", str(out)]) == EXIT_OK
    with open(out / "path.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 6 * 4
    assert {r["estimator"] for r in rows} == {"lasso_mle", "l2e_sparse"}
    assert main(["path", "--grid", "1", "--out-dir", str(out)]) == EXIT_USAGE


def test_rerun_reproduces_outputs(tmp_path):
    data = _simulate(tmp_path / "d", "--generator", "linear", "--n", "50", "--p", "2", "--outliers", "5")
    first = tmp_path / "first"
    assert main(["fit", "--input", data, "--out-dir", str(first)]) == EXIT_OK
    second = tmp_path / "second"
    assert main(["rerun", str(first / "manifest.json"), "--out-dir", str(second)]) == EXIT_OK
    a, b = _json(first / "fit.json"), _json(second / "fit.json")
    for doc in (a, b):
        doc["manifest"].pop("timestamp")
    assert a == b
    # a modified input no longer matches the recorded digest
    with open(data, "a") as fh:
        fh.write("0,0,0\n")
    assert main(["rerun", str(first / "manifest.json"), "--out-dir", str(second)]) == EXIT_DATA
    assert main(["rerun", str(tmp_path / "missing.json"), "--out-dir", str(second)]) == EXIT_DATA


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "l2ereg.cli", "simulate", "--n", "10", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "l2ereg.cli", "fit"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
    assert "usage error" in proc.stderr
