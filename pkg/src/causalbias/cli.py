"""Command-line entry point.

Subcommands: ``dsep``, ``simulate``, ``inject``, ``train``, ``evaluate``,
``experiment`` and ``report``.  Library errors map to exit codes 2 (bad
input), 3 (capacity) and 4 (training divergence).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets, experiments, metrics, models
from .errors import CapacityError, InputError, TrainingDivergenceError
from .graph import d_separated, load_graph
from .scm import (PRESETS, ScmConfig, build_scm, preset_config, sample_dataset,
                  unbiased_counterpart)

MODES = {"erm": models.train_erm, "oracle": models.train_oracle_frl}


def _ids(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _emit(doc: dict, out) -> None:
    text = json.dumps(experiments._plain(doc), indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_dsep(args) -> int:
    dag = load_graph(args.graph)
    separated = d_separated(dag, _ids(args.x), _ids(args.y), _ids(args.given))
    print("separated" if separated else "connected")
    return 0


def cmd_simulate(args) -> int:
    if (args.config is None) == (args.preset is None):
        raise InputError("pass exactly one of --config and --preset")
    if args.preset:
        config = preset_config(args.preset)
    else:
        config = ScmConfig.from_dict(_read_json(args.config))
    scm = build_scm(config)
    if args.counterpart:
        scm = unbiased_counterpart(scm)
    data = sample_dataset(scm, args.n, args.seed)
    datasets.write_dataset(data, args.out)
    print(args.out)
    return 0


def cmd_inject(args) -> int:
    data = datasets.read_dataset(args.data)
    biased = datasets.inject_label_bias(data, args.group, args.rate, args.seed)
    out = args.out or str(Path(args.data)) + "-biased"
    datasets.write_dataset(biased, out)
    print(out)
    return 0


def cmd_train(args) -> int:
    data = datasets.read_dataset(args.data)
    doc = _read_json(args.spec) if args.spec else {}
    penalty_doc = doc.pop("frl_penalty", None) if "model_spec" in doc else None
    spec = models.ModelSpec.from_dict(doc.get("model_spec", doc))
    if args.mode == "frl":
        penalty = models.FrlPenaltySpec.from_dict(penalty_doc or {})
        model = models.train_frl(data, spec, penalty)
    else:
        model = MODES[args.mode](data, spec)
    out = args.out or str(Path(args.data) / f"model-{args.mode}.json")
    models.save_model(model, out)
    print(out)
    return 0


def cmd_evaluate(args) -> int:
    model = models.load_model(args.model)
    data = datasets.read_dataset(args.data)
    scores, labels = models.predict(model, data)
    doc = {"model": args.model, "data": args.data, "n": len(data),
           "manifest": data.manifest, "mode": model.mode,
           "accuracy": {str(k): v for k, v in metrics.group_accuracy(model, data).items()}}
    if 0 < data.y.sum() < len(data):
        doc["auc"] = metrics.auc(scores, data.y).auc
    doc["positive_rate"] = {str(g): float(labels[data.a == g].mean())
                            for g in (0, 1) if (data.a == g).any()}
    _emit(doc, args.out)
    return 0


def cmd_experiment(args) -> int:
    config = experiments.load_config(args.config)
    if config.template != args.template:
        raise InputError(f"config is for {config.template}, not {args.template}")
    out = args.out or config.output_dir
    if out is None:
        raise InputError("no output directory: pass --out or set output_dir")
    experiments.run_experiment(config, out)
    print(Path(out) / experiments.REPORT_FILE)
    return 0


def cmd_report(args) -> int:
    report = experiments.load_report(args.input)
    if args.format == "csv":
        text = experiments.tables_csv(report)
    else:
        text = json.dumps(experiments._plain(experiments.report_tables(report)),
                          indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalbias", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("dsep", help="test d-separation in a graph document")
    s.add_argument("--graph", required=True)
    s.add_argument("--x", required=True, help="comma-separated node ids")
    s.add_argument("--y", required=True, help="comma-separated node ids")
    s.add_argument("--given", default="", help="comma-separated node ids")
    s.set_defaults(func=cmd_dsep)

    s = sub.add_parser("simulate", help="sample a dataset from an ScmConfig file or preset")
    s.add_argument("--config")
    s.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--counterpart", action="store_true",
                   help="sample the unbiased counterpart instead")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("inject", help="flip a fraction of one group's positive labels")
    s.add_argument("--data", required=True)
    s.add_argument("--group", type=int, default=1)
    s.add_argument("--rate", type=float, default=0.25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_inject)

    s = sub.add_parser("train", help="train an ERM, FRL or oracle-FRL model")
    s.add_argument("--data", required=True)
    s.add_argument("--mode", required=True, choices=("erm", "frl", "oracle"))
    s.add_argument("--spec", help="ModelSpec JSON, or {model_spec, frl_penalty}")
    s.add_argument("--out")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="accuracy and AUC of a model on a dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", help="run an experiment template")
    s.add_argument("template", choices=experiments.TEMPLATES)
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", help="tables and plot series from a report")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, CapacityError, TrainingDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
