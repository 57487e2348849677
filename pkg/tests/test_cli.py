import json
import subprocess
import sys

import pytest

from causalbias.cli import main
from causalbias.graph import mechanism_template, save_graph


@pytest.fixture
def data_dir(tmp_path):
    out = tmp_path / "data"
    assert main(["simulate", "--preset", "annotation_disparity", "--out", str(out),
                 "--n", "3000", "--seed", "4"]) == 0
    return out


def test_dsep(tmp_path, capsys):
    g = tmp_path / "g.json"
    save_graph(mechanism_template("prevalence_disparity"), g)
    assert main(["dsep", "--graph", str(g), "--x", "Y", "--y", "X_A", "--given", "X_Z"]) == 0
    assert capsys.readouterr().out.strip() == "connected"
    save_graph(mechanism_template("unbiased"), g)
    assert main(["dsep", "--graph", str(g), "--x", "Y", "--y", "X_A", "--given", "X_Z"]) == 0
    assert capsys.readouterr().out.strip() == "separated"


def test_simulate_config_and_counterpart(tmp_path, data_dir):
    cfg = tmp_path / "scm.json"
    cfg.write_text(json.dumps({"mechanism": "prevalence_disparity"}))
    out = tmp_path / "cf"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--n", "500",
                 "--counterpart"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n"] == 500
    assert main(["simulate", "--out", str(out)]) == 2


def test_inject_train_evaluate(tmp_path, data_dir, capsys):
    assert main(["inject", "--data", str(data_dir), "--rate", "0.5", "--seed", "1"]) == 0
    biased = capsys.readouterr().out.strip()
    assert biased.endswith("data-biased")
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"model_spec": {"epochs": 3}, "frl_penalty": {"penalty_weight": 1}}))
    for mode in ("erm", "frl", "oracle"):
        model = tmp_path / f"{mode}.json"
        assert main(["train", "--data", biased, "--mode", mode, "--spec", str(spec),
                     "--out", str(model)]) == 0
        capsys.readouterr()
        report = tmp_path / f"{mode}-eval.json"
        assert main(["evaluate", "--model", str(model), "--data", str(data_dir),
                     "--out", str(report)]) == 0
        doc = json.loads(report.read_text())
        assert doc["n"] == 3000 and 0.0 <= doc["accuracy"]["overall"] <= 1.0
        assert set(doc["positive_rate"]) == {"0", "1"}


def test_experiment_and_report(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "template": "SeparabilityTable", "n_train": 500, "n_test": 500, "seeds": [0, 1],
        "model_spec": {"epochs": 2},
        "scm_grid": {"base": {}, "vary": {"separability_strength": [0.0, 1.0]}}}))
    out = tmp_path / "run"
    assert main(["experiment", "SeparabilityTable", "--config", str(cfg), "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--in", str(out), "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert main(["report", "--in", str(out)]) == 0
    assert "series" in json.loads(capsys.readouterr().out)
    assert main(["experiment", "FutilityMatrix", "--config", str(cfg), "--out", str(out)]) == 2


@pytest.mark.parametrize("argv", [
    ["dsep", "--graph", "/nonexistent.json", "--x", "A", "--y", "Y"],
    ["inject", "--data", "/nonexistent"],
    ["simulate", "--preset", "nope", "--out", "/tmp/x"],
    ["report", "--in", "/nonexistent"],
])
def test_input_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_module_entry_point(tmp_path):
    g = tmp_path / "g.json"
    save_graph(mechanism_template("annotation_disparity"), g)
    res = subprocess.run([sys.executable, "-m", "causalbias", "dsep", "--graph", str(g),
                          "--x", "A", "--y", "Z"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "separated"
    res = subprocess.run([sys.executable, "-m", "causalbias", "dsep"], capture_output=True)
    assert res.returncode == 2
