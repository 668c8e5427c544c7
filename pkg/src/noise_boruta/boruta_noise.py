"""Noise-augmented Boruta: a shallow network's perturbation importance decides
whether each original feature beats the best noise-augmented shadow."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .dataset import Dataset, compute_stats, normalize, record_row_access
from .neural import SHIFT, MlpSpec, TrainingDiverged, perturbation_importance, train_mlp
from .selection import IMPORTANT, UNIMPORTANT, SelectionResult
from .shadow import noise_shadows

METHOD = "noise_boruta"


@dataclass(frozen=True)
class NoiseBorutaConfig:
    max_iter: int = 100
    mlp_spec: MlpSpec = field(default_factory=MlpSpec)
    n_multiplier: float = 50.0
    perturb_mode: str = SHIFT
    regenerate_shadows: bool = True
    min_hits: int = 1
    chance_guard: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.n_multiplier <= 0:
            raise ValueError("n_multiplier must be positive")
        if self.min_hits < 1:
            raise ValueError("min_hits must be at least 1")


def noise_boruta_iteration(x: np.ndarray, y: np.ndarray, n_classes: int, cfg: NoiseBorutaConfig,
                           iteration: int, shadow_stats=None) -> dict:
    """One pass: shadows, scaling, training, scoring. Returns hits and diagnostics."""
    p = x.shape[1]
    shadow_stats = compute_stats(x) if shadow_stats is None else shadow_stats
    shadow_seed = derive_seed(cfg.seed, "shadows", iteration if cfg.regenerate_shadows else 0)
    shadows = noise_shadows(x, shadow_stats, shadow_seed)
    d = np.hstack([x, shadows.columns])
    d = normalize(d, compute_stats(d))
    sigma = compute_stats(d).std
    spec = cfg.mlp_spec.with_seed(derive_seed(cfg.seed, "mlp", iteration))
    try:
        model = train_mlp(d, y, spec, n_classes)
    except TrainingDiverged as exc:
        return {"hits": np.zeros(p, bool), "scores": np.full(p, np.nan), "max_shadow": float("nan"),
                "flag": {"iteration": iteration, "reason": "diverged", "epoch": exc.epoch}}
    score = perturbation_importance(model, d, y, sigma, cfg.n_multiplier,
                                    derive_seed(cfg.seed, "perturb", iteration), cfg.perturb_mode)
    out = {"scores": score.normalized[:p], "max_shadow": float(score.normalized[p:].max()),
           "baseline_f1": score.baseline_f1, "flag": None}
    if cfg.chance_guard and score.baseline_f1 <= 1.0 / n_classes:
        out["flag"] = {"iteration": iteration, "reason": "chance_baseline",
                       "baseline_f1": score.baseline_f1}
        out["hits"] = np.zeros(p, bool)
    elif score.degenerate:
        out["flag"] = {"iteration": iteration, "reason": "no_drops"}
        out["hits"] = np.zeros(p, bool)
    else:
        out["hits"] = out["scores"] > out["max_shadow"]
    return out


def run_noise_boruta(train: Dataset, cfg: NoiseBorutaConfig) -> SelectionResult:
    """All originals compete in every iteration; a feature is important once it
    has ``min_hits`` hits after ``max_iter`` iterations."""
    record_row_access(train)
    if np.unique(train.labels).size < 2:
        raise ValueError("selection needs at least 2 classes in the training data")
    x, y = train.features, train.labels
    stats = compute_stats(x)
    result = SelectionResult.empty(METHOD, train.feature_names)
    n_failed = 0
    for it in range(cfg.max_iter):
        step = noise_boruta_iteration(x, y, train.n_classes, cfg, it, stats)
        if step["flag"] is not None:
            result.flags.append(step["flag"])
            n_failed += step["flag"]["reason"] == "diverged"
        for f in range(x.shape[1]):
            result.hit_history[f].append(bool(step["hits"][f]))
            result.importance_history[f].append(float(step["scores"][f]))
        result.max_shadow_history.append(step["max_shadow"])
        result.iterations_run = it + 1
    if n_failed == cfg.max_iter:
        raise TrainingDiverged(-1)
    hits = result.hits
    result.decision = [IMPORTANT if h >= cfg.min_hits else UNIMPORTANT for h in hits]
    result.decided_at = [result.iterations_run] * x.shape[1]
    result.finalized = True
    return result
