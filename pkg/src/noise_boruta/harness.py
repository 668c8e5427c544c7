"""Experiment harness: select on a training split, evaluate the selection over
repeated stratified resamples, compare methods, and sweep the perturbation
multiplier."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_seed
from .boruta_classic import BorutaConfig, run_boruta
from .boruta_noise import NoiseBorutaConfig, run_noise_boruta
from .dataset import (DataError, Dataset, SplitSpec, compute_stats, impute_mean, load_csv,
                      normalize, split_indices, synthesize, track_row_access)
from .forest import fit_forest, tree_votes
from .neural import (MlpSpec, TrainingDiverged, default_averaging, f1_score, predict_proba,
                     train_mlp)
from .selection import SelectionResult, selected_features
from .stats import EntropyRecord, TestResult, mann_whitney_u, prediction_entropy, shapiro_wilk, t_test_two_sample

log = logging.getLogger(__name__)

METHODS = ("boruta", "noise_boruta")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class HygieneError(AssertionError):
    """Selection was handed rows from the test partition."""


# -- configuration ------------------------------------------------------------

_SUBCONFIGS = {"boruta": BorutaConfig, "noise_boruta": NoiseBorutaConfig, "eval_mlp": MlpSpec}


def _build(cls, data: dict, where: str, forbid=("seed",)):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)} - set(forbid)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    data = dict(data)
    if cls is NoiseBorutaConfig and "mlp_spec" in data:
        data["mlp_spec"] = _build(MlpSpec, data["mlp_spec"], f"{where}.mlp_spec")
    if cls is MlpSpec and "hidden_layers" in data:
        data["hidden_layers"] = tuple(data["hidden_layers"])
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


@dataclass
class ExperimentConfig:
    """Everything an experiment depends on besides the input file.

    Seeds of the sub-configurations are not user-settable; they are derived
    from ``master_seed``. ``split_seed`` defaults to a derived value too.
    """

    dataset_path: str | None = None
    target: str | int = "target"
    missing_policy: str = "mean_impute"
    synthetic: dict | None = None
    method: str = "both"
    boruta: BorutaConfig = field(default_factory=BorutaConfig)
    noise_boruta: NoiseBorutaConfig = field(default_factory=NoiseBorutaConfig)
    eval_mlp: MlpSpec = field(default_factory=lambda: MlpSpec((64, 64), epochs=200))
    evaluator: str = "mlp"
    eval_runs: int = 100
    train_fraction: float = 0.7
    stratified: bool = True
    split_seed: int | None = None
    ablation_n: list[float] = field(default_factory=lambda: [5.0, 20.0, 50.0])
    alpha: float = 0.05
    output_dir: str = "results"
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in (*METHODS, "both"):
            raise ConfigError(f"method must be boruta, noise_boruta or both, not {self.method!r}")
        if self.missing_policy not in ("mean_impute", "reject", "train_mean"):
            raise ConfigError(f"unknown missing_policy {self.missing_policy!r}")
        if self.evaluator not in ("mlp", "rf"):
            raise ConfigError(f"evaluator must be mlp or rf, not {self.evaluator!r}")
        if self.eval_runs < 1:
            raise ConfigError("eval_runs must be at least 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if not self.ablation_n or any(n <= 0 for n in self.ablation_n):
            raise ConfigError("ablation_n must be a non-empty list of positive values")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.dataset_path is None and self.synthetic is None:
            raise ConfigError("set dataset_path or synthetic")
        if self.synthetic is not None:
            missing = {"n_instances", "n_informative", "n_noise"} - set(self.synthetic)
            if missing:
                raise ConfigError(f"synthetic is missing {', '.join(sorted(missing))}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        for key, sub in _SUBCONFIGS.items():
            if key in data:
                data[key] = _build(sub, data[key], key)
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        if "synthetic" in data and data["synthetic"] is not None:
            extra = set(data["synthetic"]) - {"n_instances", "n_informative", "n_noise",
                                              "n_classes", "seed"}
            if extra:
                raise ConfigError(f"unknown key(s) in synthetic: {', '.join(sorted(extra))}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _plain(self)

    # derived pieces ---------------------------------------------------------

    def selection_split(self) -> SplitSpec:
        seed = derive_seed(self.master_seed, "selection-split") if self.split_seed is None else self.split_seed
        return SplitSpec(self.train_fraction, self.stratified, seed)

    def boruta_config(self) -> BorutaConfig:
        return dataclasses.replace(self.boruta, seed=derive_seed(self.master_seed, "boruta"))

    def noise_config(self, n: float | None = None) -> NoiseBorutaConfig:
        cfg = dataclasses.replace(self.noise_boruta, seed=derive_seed(self.master_seed, "noise_boruta"))
        return cfg if n is None else dataclasses.replace(cfg, n_multiplier=float(n))

    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "both" else (self.method,)


# Settings that change where or how fast results are produced, not what they are.
_EXECUTION_ONLY = ("output_dir", "workers")


def provenance(cfg: ExperimentConfig, **extra) -> dict:
    config = {k: v for k, v in cfg.to_dict().items() if k not in _EXECUTION_ONLY}
    return {"package_version": __version__, "config": config,
            "derived_seeds": {"selection_split": cfg.selection_split().seed,
                              "boruta": cfg.boruta_config().seed,
                              "noise_boruta": cfg.noise_config().seed},
            **extra}


# -- data ---------------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.synthetic is not None:
        s = cfg.synthetic
        d, _ = synthesize(s["n_instances"], s["n_informative"], s["n_noise"],
                          s.get("n_classes", 2), s.get("seed", cfg.master_seed))
        return d
    policy = "defer" if cfg.missing_policy == "train_mean" else cfg.missing_policy
    return load_csv(cfg.dataset_path, cfg.target, policy)


def _split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(d.labels, spec, d.n_classes)
    train, test = d.take_rows(tr), d.take_rows(te)
    if np.isnan(d.features).any():
        means = np.nanmean(train.features, axis=0)
        means = np.where(np.isnan(means), np.nanmean(d.features, axis=0), means)
        train, test = impute_mean(train, means), impute_mean(test, means)
    return train, test


# -- selection ----------------------------------------------------------------

def run_selection(cfg: ExperimentConfig, data: Dataset | None = None,
                  methods: tuple[str, ...] | None = None,
                  noise_cfg: NoiseBorutaConfig | None = None) -> dict[str, SelectionResult]:
    """Split once, select on the training side only, and verify no test row was read."""
    d = load_dataset(cfg) if data is None else data
    train, test = _split(d, cfg.selection_split())
    test_rows = set(int(i) for i in test.row_ids)
    results = {}
    for method in methods or cfg.methods():
        with track_row_access() as seen:
            if method == "boruta":
                res = run_boruta(train, cfg.boruta_config())
            else:
                res = run_noise_boruta(train, noise_cfg or cfg.noise_config())
        leaked = seen & test_rows
        if leaked:
            raise HygieneError(f"{method} read {len(leaked)} test rows")
        res.flags.append({"reason": "hygiene", "rows_read": len(seen), "test_rows_read": 0})
        if not selected_features(res):
            log.warning("%s selected no features", method)
        results[method] = res
    return results


def selection_document(cfg: ExperimentConfig, results: dict[str, SelectionResult]) -> dict:
    return {"provenance": provenance(cfg), "methods": {m: r.to_dict() for m, r in results.items()}}


# -- evaluation ---------------------------------------------------------------

@dataclass(eq=False)
class EvaluationReport:
    method: str
    selected: list[int]
    selected_names: list[str]
    f1_runs: list[float]
    mean: float
    std: float
    n_attempts: int
    n_diverged: int
    entropy: EntropyRecord | None
    notes: list[str]
    provenance: dict
    test_results: list[TestResult] = field(default_factory=list)

    @property
    def selected_feature_count(self) -> int:
        return len(self.selected)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "selected_feature_count": self.selected_feature_count,
            "selected": self.selected,
            "selected_feature_names": self.selected_names,
            "f1_runs": self.f1_runs,
            "f1_mean": self.mean,
            "f1_std": self.std,
            "n_attempts": self.n_attempts,
            "n_diverged": self.n_diverged,
            "entropy": None if self.entropy is None else {
                "values": self.entropy.entropy.tolist(),
                "correct": self.entropy.correct.tolist(),
                "histogram": self.entropy.histogram()},
            "test_results": [t.to_dict() for t in self.test_results],
            "notes": self.notes,
            "provenance": self.provenance,
        }


def summarize(f1_runs: list[float]) -> tuple[float, float, list[str]]:
    """Mean and (N-1) standard deviation; a single run reports std 0."""
    arr = np.asarray(f1_runs, dtype=np.float64)
    if arr.size == 1:
        return float(arr[0]), 0.0, ["single run: standard deviation undefined, reported as 0"]
    return float(arr.mean()), float(arr.std(ddof=1)), []


def _eval_attempt(job: tuple) -> tuple[float | None, np.ndarray | None, np.ndarray | None, np.ndarray | None]:
    x, y, n_classes, spec, evaluator, forest_args, master_seed, attempt, frac, strat, want_probs = job
    split = SplitSpec(frac, strat, derive_seed(master_seed, "eval-split", attempt))
    tr, te = split_indices(y, split, n_classes)
    xtr, xte = x[tr], x[te]
    if np.isnan(x).any():
        means = np.nanmean(xtr, axis=0)
        xtr = np.where(np.isnan(xtr), means, xtr)
        xte = np.where(np.isnan(xte), means, xte)
    stats = compute_stats(xtr)
    xtr, xte = normalize(xtr, stats), normalize(xte, stats)
    seed = derive_seed(master_seed, "eval-model", attempt)
    if evaluator == "rf":
        n_estimators, max_depth = forest_args
        model = fit_forest(xtr, y[tr], n_estimators, max_depth, seed, n_classes=n_classes)
        votes = tree_votes(model, xte)
        probs = np.stack([(votes == c).mean(axis=0) for c in range(n_classes)], axis=1)
    else:
        try:
            model = train_mlp(xtr, y[tr], spec.with_seed(seed), n_classes)
        except TrainingDiverged:
            return None, None, None, None
        probs = predict_proba(model, xte)
    pred = np.argmax(probs, axis=1)
    f1 = f1_score(y[te], pred, default_averaging(n_classes))
    if want_probs:
        return f1, probs, y[te], pred
    return f1, None, None, None


def evaluate_selection(cfg: ExperimentConfig, selected, data: Dataset | None = None,
                       method: str = "selection") -> EvaluationReport:
    """Re-split the full dataset ``eval_runs`` times and score the selected columns.

    Resample ``k`` always uses the seeds derived from ``(master_seed, k)``, so
    two selections are evaluated on identical splits and the result does not
    depend on the worker count. Diverged runs are re-drawn, up to
    ``2 * eval_runs`` attempts in total.
    """
    selected = [int(i) for i in selected]
    if not selected:
        raise ValueError("cannot evaluate an empty feature selection")
    d = load_dataset(cfg) if data is None else data
    x = np.ascontiguousarray(d.features[:, selected])
    forest_args = (cfg.boruta.n_estimators, cfg.boruta.max_depth)

    def job(k):
        return (x, d.labels, d.n_classes, cfg.eval_mlp, cfg.evaluator, forest_args,
                cfg.master_seed, k, cfg.train_fraction, cfg.stratified, True)

    f1_runs: list[float] = []
    entropy = None
    diverged = 0
    attempt = 0
    limit = 2 * cfg.eval_runs
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        while len(f1_runs) < cfg.eval_runs and attempt < limit:
            batch = range(attempt, min(limit, attempt + cfg.eval_runs - len(f1_runs)))
            jobs = [job(k) for k in batch]
            outs = list(pool.map(_eval_attempt, jobs)) if pool else [_eval_attempt(j) for j in jobs]
            for f1, probs, y_true, y_pred in outs:
                if f1 is None:
                    diverged += 1
                    continue
                if entropy is None:
                    entropy = prediction_entropy(probs, y_true, y_pred)
                f1_runs.append(float(f1))
            attempt = batch.stop
    finally:
        if pool:
            pool.shutdown()
    if not f1_runs:
        raise TrainingDiverged(-1)
    mean, std, notes = summarize(f1_runs)
    if len(f1_runs) < cfg.eval_runs:
        notes.append(f"only {len(f1_runs)} of {cfg.eval_runs} runs converged")
    return EvaluationReport(method, selected, [d.feature_names[i] for i in selected], f1_runs,
                            mean, std, attempt, diverged, entropy, notes,
                            provenance(cfg, evaluator=cfg.evaluator))


# -- comparison ---------------------------------------------------------------

def _normality(x: list[float], label: str) -> TestResult:
    try:
        r = shapiro_wilk(x)
    except ValueError as exc:
        return TestResult(float("nan"), 0.0, "shapiro_wilk", f"{label}: {exc}; treated as non-normal")
    return dataclasses.replace(r, method_notes=f"{label}: {r.method_notes}")


def compare_methods(a: EvaluationReport, b: EvaluationReport, alpha: float = 0.05) -> dict:
    """Shapiro-Wilk on both F1 samples, then a t-test if both look normal,
    otherwise Mann-Whitney U. The verdict names the higher-mean method when
    the comparison is significant."""
    if len(a.f1_runs) < 3 or len(b.f1_runs) < 3:
        raise ValueError("each report needs at least 3 runs to compare")
    sw_a = _normality(a.f1_runs, a.method)
    sw_b = _normality(b.f1_runs, b.method)
    if sw_a.p_value > alpha and sw_b.p_value > alpha:
        branch = "t_test"
        try:
            test = t_test_two_sample(a.f1_runs, b.f1_runs)
        except ValueError:
            test = TestResult(0.0, 1.0, "t_test", "both samples constant")
    else:
        branch = "mann_whitney_u"
        test = mann_whitney_u(a.f1_runs, b.f1_runs)
    if test.p_value < alpha and a.mean != b.mean:
        verdict = a.method if a.mean > b.mean else b.method
    else:
        verdict = "indistinguishable"
    return {"methods": [a.method, b.method], "alpha": alpha, "branch": branch,
            "tests": [sw_a, sw_b, test], "p_value": test.p_value, "verdict": verdict}


def comparison_document(cmp: dict) -> dict:
    return {**cmp, "tests": [t.to_dict() for t in cmp["tests"]]}


# -- ablation -----------------------------------------------------------------

def run_ablation(cfg: ExperimentConfig, data: Dataset | None = None) -> list[dict]:
    """Noise-augmented selection and evaluation for each multiplier in ``ablation_n``;
    every other parameter (including seeds) is held fixed."""
    d = load_dataset(cfg) if data is None else data
    rows = []
    for n in cfg.ablation_n:
        ncfg = cfg.noise_config(n)
        res = run_selection(cfg, d, ("noise_boruta",), ncfg)["noise_boruta"]
        sel = selected_features(res)
        frozen = {k: v for k, v in _plain(ncfg).items() if k != "n_multiplier"}
        row = {"n": float(n), "selected": len(sel), "selected_features": sel,
               "f1_mean": None, "f1_std": None, "f1_runs": [],
               "frozen": {"noise_boruta": frozen, "eval_mlp": _plain(cfg.eval_mlp),
                          "eval_runs": cfg.eval_runs, "evaluator": cfg.evaluator,
                          "selection_split": _plain(cfg.selection_split()),
                          "master_seed": cfg.master_seed}}
        if sel:
            rep = evaluate_selection(cfg, sel, d, f"noise_boruta(n={n:g})")
            row.update(f1_mean=rep.mean, f1_std=rep.std, f1_runs=rep.f1_runs)
        else:
            row["note"] = "empty selection; not evaluated"
        rows.append(row)
    return rows


# -- writers ------------------------------------------------------------------

def write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_report_csvs(directory: Path, report: EvaluationReport) -> None:
    _write_csv(directory / "f1_runs.csv", ["run", "f1"], [(i, repr(v)) for i, v in enumerate(report.f1_runs)])
    if report.entropy is not None:
        e = report.entropy
        _write_csv(directory / "entropy.csv", ["instance", "entropy", "correct"],
                   [(i, repr(float(h)), int(c)) for i, (h, c) in enumerate(zip(e.entropy, e.correct))])


def write_ablation_csv(path: Path, rows: list[dict]) -> None:
    _write_csv(path, ["n", "selected", "f1_mean", "f1_std"],
               [(repr(r["n"]), r["selected"],
                 "" if r["f1_mean"] is None else repr(r["f1_mean"]),
                 "" if r["f1_std"] is None else repr(r["f1_std"])) for r in rows])


def run_pipeline(cfg: ExperimentConfig, data: Dataset | None = None) -> dict:
    """Select, evaluate and (for two methods) compare; write every artifact."""
    d = load_dataset(cfg) if data is None else data
    out = Path(cfg.output_dir)
    results = run_selection(cfg, d)
    write_json(out / "selection.json", selection_document(cfg, results))
    reports = {}
    for method, res in results.items():
        sel = selected_features(res)
        if not sel:
            continue
        reports[method] = evaluate_selection(cfg, sel, d, method)
    doc = {"provenance": provenance(cfg), "reports": {m: r.to_dict() for m, r in reports.items()},
           "empty_selections": [m for m, r in results.items() if not selected_features(r)]}
    if len(reports) == 2:
        cmp = compare_methods(reports["boruta"], reports["noise_boruta"], cfg.alpha)
        for r in reports.values():
            r.test_results = cmp["tests"]
            doc["reports"][r.method]["test_results"] = [t.to_dict() for t in cmp["tests"]]
        doc["comparison"] = comparison_document(cmp)
    write_json(out / "evaluation.json", doc)
    for method, rep in reports.items():
        write_report_csvs(out if len(reports) == 1 else out / method, rep)
    return {"selection": results, "reports": reports, "document": doc}
