"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .dataset import DataError, synthesize, write_csv
from .harness import (ConfigError, ExperimentConfig, compare_methods, comparison_document,
                      run_ablation, run_pipeline, run_selection, selection_document,
                      write_ablation_csv, write_json, EvaluationReport)

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--data", help="CSV dataset (overrides dataset_path)")
    p.add_argument("--target", help="target column name or 0-based index")
    p.add_argument("--method", choices=["boruta", "noise_boruta", "both"])
    p.add_argument("--n", type=float, nargs="+", help="perturbation multiplier(s)")
    p.add_argument("--max-iter", type=int, help="selection iterations for both methods")
    p.add_argument("--eval-runs", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noise-boruta", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("select", "run feature selection and write selection.json"),
                       ("evaluate", "select, then evaluate the selections over repeated splits"),
                       ("ablate", "sweep the perturbation multiplier"),
                       ("compare", "compare two methods' F1 samples")]:
        p = sub.add_parser(name, help=text)
        _common(p)
        if name == "compare":
            p.add_argument("reports", nargs="*",
                           help="evaluation.json files to compare instead of running both methods")
    s = sub.add_parser("synth", help="write a synthetic dataset to CSV")
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--instances", type=int, default=1000)
    s.add_argument("--informative", type=int, default=5)
    s.add_argument("--noise", type=int, default=45)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    return parser


def _target(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {"dataset_path": args.data, "method": args.method, "eval_runs": args.eval_runs,
                 "master_seed": args.seed, "output_dir": args.out, "workers": args.workers}
    if args.target is not None:
        overrides["target"] = _target(args.target)
    if args.data is not None:
        data.pop("synthetic", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig.from_dict(data)
    if args.max_iter is not None:
        try:
            cfg = cfg.replace(boruta=dataclasses.replace(cfg.boruta, max_iter=args.max_iter),
                              noise_boruta=dataclasses.replace(cfg.noise_boruta, max_iter=args.max_iter))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.n is not None:
        if args.command == "ablate":
            cfg = cfg.replace(ablation_n=list(args.n))
        elif len(args.n) == 1:
            cfg = cfg.replace(noise_boruta=dataclasses.replace(cfg.noise_boruta, n_multiplier=args.n[0]))
        else:
            raise ConfigError("--n takes several values only for ablate")
    try:
        cfg.validate()
        cfg.noise_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def _report_from_json(path: str, method: str | None = None) -> list[EvaluationReport]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None
    out = []
    for name, r in doc.get("reports", {}).items():
        if method and name != method:
            continue
        out.append(EvaluationReport(r["method"], r["selected"], r["selected_feature_names"],
                                    r["f1_runs"], r["f1_mean"], r["f1_std"], r["n_attempts"],
                                    r["n_diverged"], None, r["notes"], r["provenance"]))
    return out


def _cmd_synth(args) -> int:
    d, informative = synthesize(args.instances, args.informative, args.noise, args.classes, args.seed)
    write_csv(d, args.out)
    print(json.dumps({"path": args.out, "informative": [int(i) for i in informative],
                      "informative_names": [d.feature_names[i] for i in informative]}))
    return EXIT_OK


def _cmd_select(args) -> int:
    cfg = load_config(args)
    results = run_selection(cfg)
    out = Path(cfg.output_dir)
    write_json(out / "selection.json", selection_document(cfg, results))
    for m, r in results.items():
        print(f"{m}: {len(r.to_dict()['selected'])} selected -> {out / 'selection.json'}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = load_config(args)
    res = run_pipeline(cfg)
    for m, r in res["reports"].items():
        print(f"{m}: {r.selected_feature_count} features, F1 {r.mean:.4f} +/- {r.std:.4f}")
    if "comparison" in res["document"]:
        print(f"verdict: {res['document']['comparison']['verdict']}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = load_config(args)
    rows = run_ablation(cfg)
    out = Path(cfg.output_dir)
    write_ablation_csv(out / "ablation.csv", rows)
    write_json(out / "ablation.json", {"rows": rows})
    for r in rows:
        f1 = "n/a" if r["f1_mean"] is None else f"{r['f1_mean']:.4f} +/- {r['f1_std']:.4f}"
        print(f"n={r['n']:g}: {r['selected']} selected, F1 {f1}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    if args.reports:
        reports = [r for path in args.reports for r in _report_from_json(path)]
        if len(reports) != 2:
            raise ConfigError(f"need exactly two reports to compare, found {len(reports)}")
        alpha = 0.05
        out = Path(args.out or ".")
    else:
        cfg = load_config(args).replace(method="both")
        res = run_pipeline(cfg)
        reports = list(res["reports"].values())
        if len(reports) != 2:
            raise DataError("a method selected no features; nothing to compare")
        alpha, out = cfg.alpha, Path(cfg.output_dir)
    try:
        cmp = compare_methods(reports[0], reports[1], alpha)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_json(out / "comparison.json", comparison_document(cmp))
    print(f"{cmp['branch']}: p={cmp['p_value']:.4g}, verdict: {cmp['verdict']}")
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "select": _cmd_select, "evaluate": _cmd_evaluate,
             "ablate": _cmd_ablate, "compare": _cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
