"""Shadow features: label-independent competitors for the original columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import derive_rng
from .dataset import DataError, Dataset, FeatureStats, _matrix

PERMUTED = "permuted"
NOISE_AUGMENTED = "noise_augmented"


@dataclass(frozen=True, eq=False)
class ShadowSet:
    columns: np.ndarray
    origin: np.ndarray
    mode: str
    seed: int

    def names(self, feature_names) -> list[str]:
        return [f"shadow_{feature_names[o]}" for o in self.origin]


def _check(x: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
        raise DataError("shadow generation needs a non-empty 2-D feature matrix")


def permuted_shadows(d: Dataset | np.ndarray, seed: int) -> ShadowSet:
    """Each column shuffled independently (stream ``seed/permuted/j``)."""
    x = _matrix(d)
    _check(x)
    cols = np.empty_like(x)
    for j in range(x.shape[1]):
        cols[:, j] = derive_rng(seed, PERMUTED, j).permutation(x[:, j])
    return ShadowSet(cols, np.arange(x.shape[1]), PERMUTED, seed)


def noise_shadows(d: Dataset | np.ndarray, stats: FeatureStats, seed: int) -> ShadowSet:
    """Column ``j`` plus N(0, std_j) white noise per cell, then shuffled."""
    x = _matrix(d)
    _check(x)
    if stats.n_features != x.shape[1]:
        raise DataError(f"stats cover {stats.n_features} features, data has {x.shape[1]}")
    n = x.shape[0]
    cols = np.empty_like(x)
    for j in range(x.shape[1]):
        rng = derive_rng(seed, NOISE_AUGMENTED, j)
        noisy = x[:, j] + rng.normal(0.0, stats.std[j], n)
        cols[:, j] = noisy[rng.permutation(n)]
    return ShadowSet(cols, np.arange(x.shape[1]), NOISE_AUGMENTED, seed)
