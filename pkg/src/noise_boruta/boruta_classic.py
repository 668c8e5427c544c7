"""Classic Boruta over the in-house random forest."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from ._rng import derive_seed
from .dataset import Dataset, record_row_access
from .forest import OOB_PERMUTATION, ZSCORE, fit_forest, oob_importance, zscore_importance
from .selection import IMPORTANT, TENTATIVE, UNIMPORTANT, SelectionResult
from .shadow import permuted_shadows

METHOD = "boruta"
PER_ITERATION = "per_iteration"
RUNNING_MEAN = "running_mean"


@dataclass(frozen=True)
class BorutaConfig:
    max_iter: int = 100
    n_estimators: int = 200
    max_depth: int | None = None
    alpha: float = 0.05
    correction: str = "none"
    importance: str = OOB_PERMUTATION
    comparison: str = PER_ITERATION
    n_jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.correction not in ("none", "bonferroni"):
            raise ValueError(f"unknown correction {self.correction!r}")
        if self.importance not in (OOB_PERMUTATION, ZSCORE):
            raise ValueError(f"unknown importance {self.importance!r}")
        if self.comparison not in (PER_ITERATION, RUNNING_MEAN):
            raise ValueError(f"unknown comparison {self.comparison!r}")


def binomial_tails(hits: int, trials: int) -> tuple[float, float]:
    """Exact ``P(X >= hits)`` and ``P(X <= hits)`` for X ~ Binomial(trials, 1/2)."""
    if trials < 1 or not 0 <= hits <= trials:
        raise ValueError(f"need 0 <= hits <= trials and trials >= 1, got {hits}/{trials}")
    total = 1 << trials
    upper = sum(comb(trials, k) for k in range(hits, trials + 1))
    lower = sum(comb(trials, k) for k in range(0, hits + 1))
    return upper / total, lower / total


def binomial_decision(hits: int, trials: int, alpha: float = 0.05, correction: str = "none",
                      n_features: int = 1) -> str:
    """``important`` if hits are significantly above trials/2, ``unimportant``
    if significantly below, else ``tentative``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if correction == "bonferroni":
        if n_features < 1:
            raise ValueError("n_features must be positive")
        alpha = alpha / n_features
    elif correction != "none":
        raise ValueError(f"unknown correction {correction!r}")
    upper, lower = binomial_tails(hits, trials)
    if upper < alpha:
        return IMPORTANT
    if lower < alpha:
        return UNIMPORTANT
    return TENTATIVE


def run_boruta(train: Dataset, cfg: BorutaConfig) -> SelectionResult:
    """Iterate until every feature is decided or ``max_iter`` is reached.

    Rejected features leave the design matrix; accepted ones stay in it (and
    keep their shadows) but no longer collect hits.
    """
    record_row_access(train)
    if np.unique(train.labels).size < 2:
        raise ValueError("selection needs at least 2 classes in the training data")
    x, y = train.features, train.labels
    p = x.shape[1]
    result = SelectionResult.empty(METHOD, train.feature_names)
    importance = zscore_importance if cfg.importance == ZSCORE else oob_importance

    for it in range(cfg.max_iter):
        active = [f for f in range(p) if result.decision[f] != UNIMPORTANT]
        xa = x[:, active]
        shadows = permuted_shadows(xa, derive_seed(cfg.seed, "shadows", it))
        design = np.hstack([xa, shadows.columns])
        model = fit_forest(design, y, cfg.n_estimators, cfg.max_depth,
                           derive_seed(cfg.seed, "forest", it), n_classes=train.n_classes,
                           n_jobs=cfg.n_jobs)
        rep = importance(model, design, y, derive_seed(cfg.seed, "importance", it),
                         shadow_from=len(active))
        result.max_shadow_history.append(rep.max_shadow)
        for k, f in enumerate(active):
            if result.decision[f] != TENTATIVE:
                continue
            result.importance_history[f].append(float(rep.scores[k]))
            stat = (np.mean(result.importance_history[f]) if cfg.comparison == RUNNING_MEAN
                    else rep.scores[k])
            result.hit_history[f].append(bool(stat > rep.max_shadow))
        result.iterations_run = it + 1
        for f in range(p):
            if result.decision[f] != TENTATIVE:
                continue
            h = result.hit_history[f]
            verdict = binomial_decision(sum(h), len(h), cfg.alpha, cfg.correction, p)
            if verdict != TENTATIVE:
                result.decision[f] = verdict
                result.decided_at[f] = it + 1
        if TENTATIVE not in result.decision:
            break
    result.finalized = True
    return result
