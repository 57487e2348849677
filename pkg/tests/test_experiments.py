import json

import pytest
from hypothesis import given, strategies as st

from causalbias.errors import InputError
from causalbias.experiments import (REPORT_FILE, TIMING_FILE, ExperimentConfig, ExperimentReport,
                                    derive_seed, expand_grid, expected_pattern, load_config,
                                    load_report, report_tables, run_experiment, save_config,
                                    tables_csv)
from causalbias.graph import BiasMechanism

MECHS = ["prevalence_disparity", "annotation_disparity", "feature_entanglement"]
FAST = {"epochs": 3}


def small(template, grid, **kw):
    doc = {"template": template, "scm_grid": grid, "n_train": 2000, "n_test": 2000,
           "seeds": [0, 1, 2], "model_spec": FAST, **kw}
    return ExperimentConfig.from_dict(doc)


def test_grid_expansion_order_and_base():
    grid = expand_grid({"x_a_channels": 2}, mechanism=["unbiased", "prevalence_disparity"],
                       separability_strength=[0.0, 1.0])
    assert [(c.mechanism.value, c.separability_strength) for c in grid] == [
        ("unbiased", 0.0), ("unbiased", 1.0),
        ("prevalence_disparity", 0.0), ("prevalence_disparity", 1.0)]
    assert all(c.x_a_channels == 2 for c in grid)


@pytest.mark.parametrize("doc", [
    [],
    {"template": "SeparabilityTable"},
    {"template": "Nope", "scm_grid": [{}]},
    {"template": "SeparabilityTable", "scm_grid": [{}], "bogus": 1},
    {"template": "SeparabilityTable", "scm_grid": [{}], "seeds": [1, 1]},
    {"template": "SeparabilityTable", "scm_grid": [{}], "seeds": []},
    {"template": "SeparabilityTable", "scm_grid": [{}], "alpha": 1.5},
    {"template": "SeparabilityTable", "scm_grid": [{}], "n_train": 10},
    {"template": "SeparabilityTable", "scm_grid": []},
    {"template": "SeparabilityTable", "scm_grid": {"base": {}, "vary": {"x": 1}}},
    {"template": "SeparabilityTable", "scm_grid": [{"colour": 1}]},
    {"template": "SeparabilityTable", "scm_grid": [{}], "label_bias": {"rate": 2}},
    {"template": "SeparabilityTable", "scm_grid": [{}], "metrics": {"extra": 0}},
    {"template": "SeparabilityTable", "scm_grid": [{}], "model_spec": {"depth": 3}},
])
def test_bad_configs_are_rejected(doc):
    with pytest.raises(InputError):
        ExperimentConfig.from_dict(doc)


def test_config_round_trip_and_digest(tmp_path):
    cfg = small("SeparabilityTable", {"base": {}, "vary": {"separability_strength": [0, 1]}})
    save_config(cfg, tmp_path / "c.json")
    again = load_config(tmp_path / "c.json")
    assert again == cfg
    assert cfg.replace(output_dir="elsewhere").digest() == cfg.digest()
    assert cfg.replace(n_train=3000).digest() != cfg.digest()


def test_shipped_configs_parse():
    from pathlib import Path
    for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.json")):
        assert load_config(path).output_dir


@given(st.integers(0, 2 ** 40), st.text(max_size=8))
def test_derive_seed_range_and_separation(seed, purpose):
    a = derive_seed(seed, purpose)
    assert 0 <= a < 2 ** 63
    assert a == derive_seed(seed, purpose)
    assert a != derive_seed(seed, purpose + "x")


def test_expected_pattern():
    assert expected_pattern("biased", "unbiased") == {"effective_possible": True,
                                                      "harmless_possible": True}
    assert expected_pattern("unbiased", "biased") == {"effective_possible": False,
                                                      "harmless_possible": False}


def test_separability_table_sorted_and_reproducible(tmp_path):
    cfg = small("SeparabilityTable",
                {"base": {}, "vary": {"separability_strength": [1.0, 0.0, 0.6]}})
    rep = run_experiment(cfg, tmp_path / "a")
    assert rep.summary["auc_mean"] == sorted(rep.summary["auc_mean"])
    assert rep.summary["order"][0] == 1 and rep.summary["order"][-1] == 0
    run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / REPORT_FILE).read_bytes()
    assert a == (tmp_path / "b" / REPORT_FILE).read_bytes()
    assert json.loads((tmp_path / "a" / TIMING_FILE).read_text())["runtime_seconds"] >= 0
    for cell in rep.cells:
        for run in cell["runs"]:
            assert run["train"]["config_hash"] == cell["config_hash"]


def test_report_round_trip_and_tables(tmp_path):
    cfg = small("SeparabilityTable", [{"separability_strength": 0.5}])
    rep = run_experiment(cfg, tmp_path)
    loaded = load_report(tmp_path / REPORT_FILE)
    assert loaded.to_json() == rep.to_json()
    tables = report_tables(loaded)
    assert tables["rows"][0]["separability_strength"] == 0.5
    assert tables_csv(loaded).splitlines()[0].startswith("cell,mechanism")
    bad = dict(rep.to_dict(), version=99)
    with pytest.raises(InputError):
        ExperimentReport.from_dict(bad)
    with pytest.raises(InputError):
        load_report(tmp_path / "missing.json")


def test_degradation_small_run():
    cfg = small("DegradationUnderLabelBias", [{"separability_strength": 1.0}],
                label_bias={"group": 1, "rate": 0.5})
    rep = run_experiment(cfg)
    assert len(rep.tests) == 2 and rep.summary["n_tests"] == 2
    assert {t["group"] for t in rep.tests} == {0, 1}
    deg = rep.cells[0]["degradation_pp"]
    assert deg["1"]["mean"] < 0
    rows = report_tables(rep)["rows"]
    assert [r["group"] for r in rows] == [0, 1]


def test_futility_small_run_shape():
    cfg = small("FutilityMatrix", [{"mechanism": "annotation_disparity",
                                    "mechanism_strength": 1.0}],
                metrics={"n_permutations": 5})
    rep = run_experiment(cfg)
    keys = {(c["train"], c["test"], c["model"]) for c in rep.cells}
    assert len(keys) == 8
    for c in rep.cells:
        assert c["n_both"] <= min(c["n_effective"], c["n_harmless"])
        assert c["n_fair_and_harmless"] <= c["n_fair"]
        if c["train"] == "unbiased":
            assert c["n_effective"] == 0


def test_futility_rejects_unbiased_mechanism():
    cfg = small("FutilityMatrix", [{"mechanism": "unbiased"}])
    with pytest.raises(InputError):
        run_experiment(cfg)


def sweep_doc(strengths, mechanisms=MECHS):
    return {"base": {"mechanism_strength": 1.0},
            "vary": {"mechanism": mechanisms, "separability_strength": strengths}}


@pytest.mark.parametrize("grid", [sweep_doc([0, 0.5, 1]), sweep_doc([0, .2, .4, .6, 1], MECHS[:2]),
                                  sweep_doc([0, .2, .4, .6, 1], MECHS + ["unbiased"])])
def test_sweep_preconditions(grid):
    with pytest.raises(InputError):
        run_experiment(small("SeparabilitySweep", grid))


def test_sweep_small_run():
    cfg = small("SeparabilitySweep", sweep_doc([0, .25, .5, .75, 1]), seeds=[0, 1])
    rep = run_experiment(cfg)
    agg = rep.summary["aggregate"]
    assert [a["separability_strength"] for a in agg] == [0, .25, .5, .75, 1]
    assert all(a["n_runs"] == 6 for a in agg)
    names = {t["name"] for t in rep.tests}
    assert names == {"kendall_tau_delta_acc_vs_auc", "mechanism_difference"}
    series = report_tables(rep)["series"]
    assert len(series["group1"]["x"]) == 5


def test_template_mismatch():
    from causalbias.experiments import run_futility_matrix
    with pytest.raises(InputError):
        run_futility_matrix(small("SeparabilityTable", [{}]))
    assert BiasMechanism("unbiased") is BiasMechanism.UNBIASED
