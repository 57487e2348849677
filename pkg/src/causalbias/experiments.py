"""Experiment templates over seeded configuration grids.

Four templates share one config type and one report format:

* ``SeparabilityTable``: subgroup-classifier AUC per grid cell.
* ``DegradationUnderLabelBias``: clean vs label-biased ERM, per-group
  accuracy loss, Mann-Whitney U per group and Holm across the grid.
* ``FutilityMatrix``: effectiveness / harmlessness verdicts on the
  {unbiased, biased} train x test grid.
* ``SeparabilitySweep``: FRL minus ERM accuracy on counterpart test data
  against measured separability, with Kendall's tau.

Reports are plain JSON with sorted keys and no wall-clock fields, so the
same config produces the same bytes.  Every per-seed run records the
dataset manifests and model digests it was computed from.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import metrics, models, stats
from .datasets import Dataset, inject_label_bias
from .errors import InputError
from .graph import BIASED_MECHANISMS, BiasMechanism
from .scm import ScmConfig, build_scm, config_hash, exact_joint, sample_dataset, unbiased_counterpart

REPORT_FILE = "report.json"
TIMING_FILE = "timing.json"
REPORT_VERSION = 1
TEMPLATES = ("SeparabilityTable", "DegradationUnderLabelBias", "FutilityMatrix",
             "SeparabilitySweep")
SIDES = ("unbiased", "biased")


# ---------------------------------------------------------------- config


def _strict(cls, doc, what):
    if not isinstance(doc, dict):
        raise InputError(f"{what} must be a mapping")
    unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise InputError(f"unknown {what} keys: {sorted(unknown)}")
    return cls(**doc)


@dataclass(frozen=True)
class LabelBiasSpec:
    """Which group loses positive labels, and what fraction of them."""

    group: int = 1
    rate: float = 0.25

    def __post_init__(self):
        if self.group not in (0, 1):
            raise InputError("label_bias.group must be 0 or 1")
        if not 0.0 <= self.rate <= 1.0:
            raise InputError("label_bias.rate must lie in [0, 1]")


@dataclass(frozen=True)
class MetricSpec:
    epsilon: float = metrics.EPSILON
    bins: int = metrics.DEFAULT_BINS
    n_permutations: int = metrics.N_PERMUTATIONS
    jitter: float = metrics.REPRESENTATION_JITTER

    def __post_init__(self):
        if self.epsilon < 0 or self.bins < 2 or self.n_permutations < 0 or self.jitter < 0:
            raise InputError("invalid metric settings")


def expand_grid(base: dict | None = None, **vary) -> list[ScmConfig]:
    """Cartesian product of ``vary`` over ``base``; the first key varies slowest."""
    base = dict(base or {})
    keys = list(vary)
    cells = []
    for values in itertools.product(*(vary[k] for k in keys)):
        cells.append(ScmConfig.from_dict({**base, **dict(zip(keys, values))}))
    return cells


def _parse_grid(doc) -> tuple[ScmConfig, ...]:
    if isinstance(doc, dict):
        unknown = set(doc) - {"base", "vary"}
        if unknown:
            raise InputError(f"unknown scm_grid keys: {sorted(unknown)}")
        vary = doc.get("vary") or {}
        if not isinstance(vary, dict) or not all(isinstance(v, list) for v in vary.values()):
            raise InputError("scm_grid.vary must map field names to lists")
        return tuple(expand_grid(doc.get("base"), **vary))
    if isinstance(doc, list):
        return tuple(ScmConfig.from_dict(d) for d in doc)
    raise InputError("scm_grid must be a list of configs or a {base, vary} mapping")


@dataclass(frozen=True)
class ExperimentConfig:
    template: str
    scm_grid: tuple[ScmConfig, ...]
    model_spec: models.ModelSpec = field(default_factory=models.ModelSpec)
    frl_penalty: models.FrlPenaltySpec = field(default_factory=models.FrlPenaltySpec)
    n_train: int = 20000
    n_test: int = 20000
    seeds: tuple[int, ...] = tuple(range(10))
    alpha: float = 0.05
    output_dir: str | None = None
    label_bias: LabelBiasSpec = field(default_factory=LabelBiasSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise InputError(f"template must be one of {TEMPLATES}, got {self.template!r}")
        object.__setattr__(self, "scm_grid", tuple(self.scm_grid))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.scm_grid:
            raise InputError("scm_grid is empty")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise InputError("seeds must be non-empty and distinct")
        if any(s < 0 for s in self.seeds):
            raise InputError("seeds must be non-negative")
        if self.n_train < 100 or self.n_test < 100:
            raise InputError("n_train and n_test must be >= 100")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "scm_grid": [c.to_dict() for c in self.scm_grid],
            "model_spec": self.model_spec.to_dict(),
            "frl_penalty": self.frl_penalty.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "seeds": list(self.seeds),
            "alpha": self.alpha,
            "output_dir": self.output_dir,
            "label_bias": dataclasses.asdict(self.label_bias),
            "metrics": dataclasses.asdict(self.metrics),
        }

    @classmethod
    def from_dict(cls, doc) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise InputError("experiment config must be a mapping")
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        if "template" not in doc or "scm_grid" not in doc:
            raise InputError("config needs 'template' and 'scm_grid'")
        kw = dict(doc)
        kw["scm_grid"] = _parse_grid(doc["scm_grid"])
        if "model_spec" in doc:
            kw["model_spec"] = models.ModelSpec.from_dict(doc["model_spec"])
        if "frl_penalty" in doc:
            kw["frl_penalty"] = models.FrlPenaltySpec.from_dict(doc["frl_penalty"])
        if "label_bias" in doc:
            kw["label_bias"] = _strict(LabelBiasSpec, doc["label_bias"], "label_bias")
        if "metrics" in doc:
            kw["metrics"] = _strict(MetricSpec, doc["metrics"], "metrics")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise InputError(str(exc)) from exc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        # the output location does not change results
        doc = self.to_dict()
        doc.pop("output_dir")
        return config_hash(doc)


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def derive_seed(seed: int, purpose: str) -> int:
    """Independent 63-bit seed for one use of a run seed."""
    digest = hashlib.sha256(f"{int(seed)}/{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------- report


@dataclass
class ExperimentReport:
    template: str
    config: dict
    config_hash: str
    cells: list
    tests: list
    summary: dict
    environment: dict

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "template": self.template,
            "config": self.config,
            "config_hash": self.config_hash,
            "cells": self.cells,
            "tests": self.tests,
            "summary": self.summary,
            "environment": self.environment,
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc) -> "ExperimentReport":
        if doc.get("version") != REPORT_VERSION:
            raise InputError(f"unsupported report version {doc.get('version')!r}")
        try:
            return cls(doc["template"], doc["config"], doc["config_hash"], doc["cells"],
                       doc["tests"], doc["summary"], doc["environment"])
        except KeyError as exc:
            raise InputError(f"malformed report: missing {exc}") from exc


def _plain(obj):
    """numpy scalars and tuples to JSON-native values, recursively."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def environment() -> dict:
    from . import __version__
    return {"causalbias": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "machine": platform.machine()}


def write_report(report: ExperimentReport, directory, runtime_seconds: float | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / REPORT_FILE
    path.write_text(report.to_json())
    if runtime_seconds is not None:
        # kept out of the report so reruns stay byte-identical
        (directory / TIMING_FILE).write_text(
            json.dumps({"runtime_seconds": runtime_seconds}, indent=1) + "\n")
    return path


def load_report(path) -> ExperimentReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc
    return ExperimentReport.from_dict(doc)


def _new_report(config: ExperimentConfig, cells, tests, summary) -> ExperimentReport:
    return ExperimentReport(config.template, config.to_dict(), config.digest(), cells, tests,
                            summary, environment())


def _test_entry(name: str, result: stats.TestResult, seeds, rejected=None, **where) -> dict:
    entry = {"name": name, "seeds": list(seeds), **where, **result.to_dict()}
    if rejected is not None:
        entry["rejected"] = bool(rejected)
    return entry


# ---------------------------------------------------------------- run helpers


def _require(config: ExperimentConfig, template: str):
    if config.template != template:
        raise InputError(f"config template is {config.template!r}, expected {template!r}")


def _spec(config: ExperimentConfig, seed: int) -> models.ModelSpec:
    return dataclasses.replace(config.model_spec, seed=int(seed))


def _manifest(data: Dataset) -> dict:
    # the full ScmConfig is in the report config; its hash is enough here
    return {k: v for k, v in data.manifest.items() if k != "config"}


def model_digest(model: models.TrainedModel) -> str:
    return config_hash(model.to_dict())


def _mean_sd(values) -> dict:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"mean": float(v.mean()), "sd": sd}


def _cell_header(index: int, cfg: ScmConfig) -> dict:
    return {"index": index, "config_hash": cfg.digest(), "mechanism": cfg.mechanism.value,
            "separability_strength": cfg.separability_strength,
            "mechanism_strength": cfg.mechanism_strength}


def _pair(scm, config: ExperimentConfig, seed: int) -> tuple[Dataset, Dataset]:
    return (sample_dataset(scm, config.n_train, derive_seed(seed, "train")),
            sample_dataset(scm, config.n_test, derive_seed(seed, "test")))


# ---------------------------------------------------------------- templates


def run_separability_table(config: ExperimentConfig) -> ExperimentReport:
    """Subgroup-classifier test AUC per cell, cells sorted by mean AUC."""
    _require(config, "SeparabilityTable")
    cells = []
    for i, cfg in enumerate(config.scm_grid):
        scm = build_scm(cfg)
        runs = []
        for s in config.seeds:
            train, test = _pair(scm, config, s)
            res = metrics.measure_separability(train, test, _spec(config, s))
            runs.append({"seed": s, "train": _manifest(train), "test": _manifest(test),
                         **res.to_dict()})
        cell = _cell_header(i, cfg)
        cell.update(runs=runs, auc=_mean_sd([r["auc"] for r in runs]), seeds=list(config.seeds))
        cells.append(cell)
    cells.sort(key=lambda c: (c["auc"]["mean"], c["index"]))
    summary = {"order": [c["index"] for c in cells],
               "auc_mean": [c["auc"]["mean"] for c in cells]}
    return _new_report(config, cells, [], summary)


def run_degradation(config: ExperimentConfig) -> ExperimentReport:
    """Accuracy loss from training on label-biased data, tested on clean data.

    Per cell and seed a clean model and a biased model (same seed, same
    records, some group labels flipped) are scored on a clean test set.
    Degradation is ``100 * (biased - clean)`` accuracy, so a loss is
    negative.  Each group gets a one-sided Mann-Whitney U test of clean
    against biased accuracies across seeds; Holm-Bonferroni runs over every
    (cell, group) test.
    """
    _require(config, "DegradationUnderLabelBias")
    bias = config.label_bias
    cells, tests = [], []
    for i, cfg in enumerate(config.scm_grid):
        scm = build_scm(cfg)
        runs = []
        for s in config.seeds:
            train, test = _pair(scm, config, s)
            biased = inject_label_bias(train, bias.group, bias.rate, derive_seed(s, "inject"))
            spec = _spec(config, s)
            clean_model = models.train_erm(train, spec)
            biased_model = models.train_erm(biased, spec)
            acc_c = metrics.group_accuracy(clean_model, test)
            acc_b = metrics.group_accuracy(biased_model, test)
            auc = metrics.measure_separability(train, test, spec)
            runs.append({
                "seed": s, "train": _manifest(train), "biased_train": _manifest(biased),
                "test": _manifest(test),
                "models": {"clean": model_digest(clean_model), "biased": model_digest(biased_model)},
                "auc": auc.auc,
                "accuracy_clean": {str(k): v for k, v in acc_c.items()},
                "accuracy_biased": {str(k): v for k, v in acc_b.items()},
            })
        cell = _cell_header(i, cfg)
        cell["runs"] = runs
        cell["seeds"] = list(config.seeds)
        cell["auc"] = _mean_sd([r["auc"] for r in runs])
        cell["degradation_pp"] = {}
        for g in ("0", "1", "overall"):
            clean = [r["accuracy_clean"][g] for r in runs]
            biased = [r["accuracy_biased"][g] for r in runs]
            if any(v is None for v in clean + biased):
                raise InputError(f"cell {i}: a test set lacks group {g}")
            cell["degradation_pp"][g] = _mean_sd(100.0 * (np.array(biased) - np.array(clean)))
            if g != "overall":
                res = stats.mann_whitney_u(clean, biased, alternative="greater")
                tests.append(_test_entry("degradation", res, config.seeds, cell=i, group=int(g)))
        cells.append(cell)

    reject = stats.holm_bonferroni([t["p_value"] for t in tests], config.alpha)
    for t, r in zip(tests, reject):
        t["rejected"] = bool(r)
    significant = [{"cell": t["cell"], "group": t["group"]} for t in tests if t["rejected"]]
    summary = {"alpha": config.alpha, "correction": "holm-bonferroni",
               "alternative": "greater (clean accuracy above biased)",
               "significant": significant, "n_tests": len(tests)}
    return _new_report(config, cells, tests, summary)


def expected_pattern(train: str, test: str) -> dict:
    """Which verdicts can hold for a train/test pairing.

    Effectiveness needs bias at train time; harmlessness needs none at test
    time.
    """
    return {"effective_possible": train == "biased", "harmless_possible": test == "unbiased"}


def run_futility_matrix(config: ExperimentConfig) -> ExperimentReport:
    """Effectiveness and harmlessness over {unbiased, biased} train x test.

    Each grid cell must use a biased mechanism; its unbiased side is
    :func:`unbiased_counterpart`.  Per seed, ERM, FRL and oracle FRL are
    trained on each training side and every (train, test, fair model)
    combination gets a :func:`metrics.fairness_verdict` with the exact
    I(Y; X) of the test distribution.
    """
    _require(config, "FutilityMatrix")
    m = config.metrics
    cells = []
    for i, cfg in enumerate(config.scm_grid):
        if cfg.mechanism == BiasMechanism.UNBIASED:
            raise InputError(f"grid cell {i}: the futility matrix needs a biased mechanism")
        scms = {"biased": build_scm(cfg)}
        scms["unbiased"] = unbiased_counterpart(scms["biased"])
        joints = {k: exact_joint(v) for k, v in scms.items()}
        verdicts = {(tr, te, fm): [] for tr in SIDES for te in SIDES for fm in ("FRL", "OracleFRL")}
        for s in config.seeds:
            data = {k: _pair(scm, config, s) for k, scm in scms.items()}
            spec = _spec(config, s)
            for tr in SIDES:
                train = data[tr][0]
                erm = models.train_erm(train, spec)
                fair = {"FRL": models.train_frl(train, spec, config.frl_penalty),
                        "OracleFRL": models.train_oracle_frl(train, spec)}
                for te in SIDES:
                    test = data[te][1]
                    for name, model in fair.items():
                        v = metrics.fairness_verdict(
                            erm, model, train, test, test_joint=joints[te], epsilon=m.epsilon,
                            bins=m.bins, n_permutations=m.n_permutations,
                            seed=derive_seed(s, "mi"), jitter=m.jitter)
                        verdicts[(tr, te, name)].append({
                            "seed": s, "train": _manifest(train), "test": _manifest(test),
                            "models": {"ERM": model_digest(erm), name: model_digest(model)},
                            **v.to_dict()})
        for (tr, te, name), runs in verdicts.items():
            cell = _cell_header(i, cfg)
            n_eff = sum(r["effective"] for r in runs)
            n_harm = sum(r["harmless"] for r in runs)
            n_fair_harm = sum(r["fair"] and r["harmless"] for r in runs)
            n_both = sum(r["effective"] and r["harmless"] for r in runs)
            pattern = expected_pattern(tr, te)
            # the harmlessness limit concerns representations that are fair
            cell.update(train=tr, test=te, model=name, runs=runs, seeds=list(config.seeds),
                        n_effective=n_eff, n_harmless=n_harm, n_fair_and_harmless=n_fair_harm,
                        n_fair=sum(r["fair"] for r in runs), n_both=n_both, **pattern,
                        consistent=(pattern["effective_possible"] or n_eff == 0)
                        and (pattern["harmless_possible"] or n_fair_harm == 0))
            cells.append(cell)
    summary = {
        "epsilon": m.epsilon,
        "all_consistent": all(c["consistent"] for c in cells),
        "inconsistent_cells": [[c["index"], c["train"], c["test"], c["model"]]
                               for c in cells if not c["consistent"]],
        "possible_cell_successes": {
            f'{c["mechanism"]}/{c["model"]}': c["n_both"] for c in cells
            if c["train"] == "biased" and c["test"] == "unbiased"},
    }
    return _new_report(config, cells, [], summary)


def run_separability_sweep(config: ExperimentConfig) -> ExperimentReport:
    """FRL minus ERM accuracy on counterpart test sets across separability.

    ``delta_acc_pp = 100 * (FRL - ERM)`` per group and overall.  Runs are
    pooled over seeds and mechanisms per separability strength; Kendall's
    tau relates the pooled overall delta to the pooled measured AUC
    (one-sided, positive association).  Per-mechanism delta distributions
    are compared pairwise with two-sided Mann-Whitney U tests and Holm.
    """
    _require(config, "SeparabilitySweep")
    strengths = sorted({c.separability_strength for c in config.scm_grid})
    mechanisms = {c.mechanism for c in config.scm_grid}
    if BiasMechanism.UNBIASED in mechanisms:
        raise InputError("the sweep takes biased mechanisms only")
    if len(strengths) < 5 or not set(BIASED_MECHANISMS) <= mechanisms:
        raise InputError("the sweep needs >= 5 separability strengths and all three biased "
                         "mechanisms")
    cells = []
    for i, cfg in enumerate(config.scm_grid):
        biased = build_scm(cfg)
        counterpart = unbiased_counterpart(biased)
        runs = []
        for s in config.seeds:
            train = sample_dataset(biased, config.n_train, derive_seed(s, "train"))
            test = sample_dataset(counterpart, config.n_test, derive_seed(s, "test"))
            spec = _spec(config, s)
            erm = models.train_erm(train, spec)
            frl = models.train_frl(train, spec, config.frl_penalty)
            acc_e = metrics.group_accuracy(erm, test)
            acc_f = metrics.group_accuracy(frl, test)
            auc = metrics.measure_separability(train, test, spec)
            runs.append({
                "seed": s, "train": _manifest(train), "test": _manifest(test),
                "models": {"ERM": model_digest(erm), "FRL": model_digest(frl)},
                "auc": auc.auc,
                "accuracy_erm": {str(k): v for k, v in acc_e.items()},
                "accuracy_frl": {str(k): v for k, v in acc_f.items()},
                "delta_acc_pp": {str(k): 100.0 * (acc_f[k] - acc_e[k]) for k in acc_e},
            })
        cell = _cell_header(i, cfg)
        cell.update(runs=runs, seeds=list(config.seeds), auc=_mean_sd([r["auc"] for r in runs]),
                    delta_acc_pp={g: _mean_sd([r["delta_acc_pp"][g] for r in runs])
                                  for g in ("overall", "0", "1")})
        cells.append(cell)

    aggregate = []
    for st in strengths:
        members = [c for c in cells if c["separability_strength"] == st]
        runs = [r for c in members for r in c["runs"]]
        aggregate.append({
            "separability_strength": st, "cells": [c["index"] for c in members],
            "n_runs": len(runs), "auc": _mean_sd([r["auc"] for r in runs]),
            "delta_acc_pp": {g: _mean_sd([r["delta_acc_pp"][g] for r in runs])
                             for g in ("overall", "0", "1")},
        })
    x = [a["auc"]["mean"] for a in aggregate]
    y = [a["delta_acc_pp"]["overall"]["mean"] for a in aggregate]
    tau = stats.kendall_tau(x, y, alternative="greater", seed=0)
    tests = [_test_entry("kendall_tau_delta_acc_vs_auc", tau, config.seeds,
                         rejected=tau.p_value < config.alpha,
                         strengths=strengths)]

    by_mech = {}
    for mech in BIASED_MECHANISMS:
        mech_cells = [c for c in cells if c["mechanism"] == mech.value]
        by_mech[mech.value] = {
            "per_strength": [{"separability_strength": c["separability_strength"],
                              "cell": c["index"], "delta_acc_pp": c["delta_acc_pp"]}
                             for c in sorted(mech_cells, key=lambda c: c["separability_strength"])],
            "values": [r["delta_acc_pp"]["overall"] for c in mech_cells for r in c["runs"]],
        }
    pair_tests = []
    for m1, m2 in itertools.combinations([m.value for m in BIASED_MECHANISMS], 2):
        res = stats.mann_whitney_u(by_mech[m1]["values"], by_mech[m2]["values"])
        pair_tests.append(_test_entry("mechanism_difference", res, config.seeds,
                                      mechanisms=[m1, m2]))
    reject = stats.holm_bonferroni([t["p_value"] for t in pair_tests], config.alpha)
    for t, r in zip(pair_tests, reject):
        t["rejected"] = bool(r)
    tests.extend(pair_tests)
    for v in by_mech.values():
        del v["values"]

    low, high = aggregate[0], aggregate[-1]
    summary = {
        "alpha": config.alpha,
        "aggregate": aggregate,
        "per_mechanism": by_mech,
        "tau": tau.statistic, "tau_p_value": tau.p_value, "tau_method": tau.method.value,
        "low_separability_both_groups_worse": bool(
            low["delta_acc_pp"]["0"]["mean"] < 0 and low["delta_acc_pp"]["1"]["mean"] < 0),
        "high_separability_group1_better": bool(high["delta_acc_pp"]["1"]["mean"] > 0),
        "mechanisms_differ": bool(any(t["rejected"] for t in pair_tests)),
    }
    return _new_report(config, cells, tests, summary)


RUNNERS: dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "SeparabilityTable": run_separability_table,
    "DegradationUnderLabelBias": run_degradation,
    "FutilityMatrix": run_futility_matrix,
    "SeparabilitySweep": run_separability_sweep,
}


def run_experiment(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Dispatch on ``config.template``; write the report when a directory is known."""
    start = time.perf_counter()
    report = RUNNERS[config.template](config)
    target = out_dir if out_dir is not None else config.output_dir
    if target is not None:
        write_report(report, target, time.perf_counter() - start)
    return report


# ---------------------------------------------------------------- tables


def report_tables(report: ExperimentReport) -> dict:
    """Flat rows plus plot-ready series for each template."""
    t = report.template
    if t == "SeparabilityTable":
        rows = [{"cell": c["index"], "mechanism": c["mechanism"],
                 "separability_strength": c["separability_strength"],
                 "auc_mean": c["auc"]["mean"], "auc_sd": c["auc"]["sd"]} for c in report.cells]
        series = {"x": [r["separability_strength"] for r in rows],
                  "y": [r["auc_mean"] for r in rows], "y_sd": [r["auc_sd"] for r in rows]}
    elif t == "DegradationUnderLabelBias":
        by_key = {(e["cell"], e["group"]): e for e in report.tests}
        rows = []
        for c in report.cells:
            for g in (0, 1):
                e = by_key[(c["index"], g)]
                rows.append({"cell": c["index"], "separability_strength": c["separability_strength"],
                             "auc_mean": c["auc"]["mean"], "group": g,
                             "degradation_pp_mean": c["degradation_pp"][str(g)]["mean"],
                             "degradation_pp_sd": c["degradation_pp"][str(g)]["sd"],
                             "p_value": e["p_value"], "rejected": e["rejected"]})
        series = {f"group{g}": {"x": [r["auc_mean"] for r in rows if r["group"] == g],
                                "y": [r["degradation_pp_mean"] for r in rows if r["group"] == g],
                                "y_sd": [r["degradation_pp_sd"] for r in rows if r["group"] == g]}
                  for g in (0, 1)}
    elif t == "FutilityMatrix":
        rows = [{"cell": c["index"], "mechanism": c["mechanism"], "train": c["train"],
                 "test": c["test"], "model": c["model"], "n_seeds": len(c["seeds"]),
                 "n_effective": c["n_effective"], "n_harmless": c["n_harmless"],
                 "n_fair_and_harmless": c["n_fair_and_harmless"],
                 "n_both": c["n_both"], "effective_possible": c["effective_possible"],
                 "harmless_possible": c["harmless_possible"], "consistent": c["consistent"]}
                for c in report.cells]
        series = {}
    elif t == "SeparabilitySweep":
        rows = []
        for a in report.summary["aggregate"]:
            row = {"separability_strength": a["separability_strength"],
                   "auc_mean": a["auc"]["mean"], "auc_sd": a["auc"]["sd"], "n_runs": a["n_runs"]}
            for g in ("overall", "0", "1"):
                key = g if g == "overall" else f"group{g}"
                row[f"delta_acc_pp_{key}_mean"] = a["delta_acc_pp"][g]["mean"]
                row[f"delta_acc_pp_{key}_sd"] = a["delta_acc_pp"][g]["sd"]
            rows.append(row)
        series = {key: {"x": [r["auc_mean"] for r in rows],
                        "y": [r[f"delta_acc_pp_{key}_mean"] for r in rows],
                        "y_sd": [r[f"delta_acc_pp_{key}_sd"] for r in rows]}
                  for key in ("overall", "group0", "group1")}
    else:
        raise InputError(f"unknown template {t!r}")
    return {"template": t, "config_hash": report.config_hash, "rows": rows, "series": series}


def tables_csv(report: ExperimentReport) -> str:
    rows = report_tables(report)["rows"]
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
