"""Tabular classification datasets: loading, statistics, scaling, splitting."""

from __future__ import annotations

import contextlib
import contextvars
import csv
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._rng import derive_rng

MISSING_TOKENS = {"", "na", "NA"}


class DataError(ValueError):
    """Raised for unreadable or malformed input data."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (rows are instances) with contiguous integer labels.

    ``row_ids`` are the row positions in the originally loaded table; they
    survive splitting and column selection so that callers can audit which
    rows a computation was handed.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    n_classes: int
    row_ids: np.ndarray = None  # type: ignore[assignment]
    label_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
        if self.n_classes < 1:
            raise DataError("n_classes must be positive")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} feature names for {x.shape[1]} columns")
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        ids = np.arange(x.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if ids.shape != y.shape:
            raise DataError("row_ids length must match the row count")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "labels", _frozen(y))
        object.__setattr__(self, "row_ids", _frozen(ids))
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take_rows(self, idx: np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names,
                       self.n_classes, self.row_ids[idx], self.label_names, dict(self.meta))

    def take_columns(self, cols: Sequence[int]) -> "Dataset":
        cols = np.asarray(cols, dtype=np.int64)
        names = tuple(self.feature_names[c] for c in cols)
        return Dataset(self.features[:, cols], self.labels, names, self.n_classes,
                       self.row_ids, self.label_names, dict(self.meta))

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.feature_names, self.n_classes,
                       self.row_ids, self.label_names, dict(self.meta))


@dataclass(frozen=True, eq=False)
class FeatureStats:
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


# -- row-access audit ---------------------------------------------------------

_row_log: contextvars.ContextVar[set | None] = contextvars.ContextVar("row_log", default=None)


@contextlib.contextmanager
def track_row_access() -> Iterator[set]:
    """Collect the ``row_ids`` of every dataset handed to a selection routine."""
    seen: set[int] = set()
    token = _row_log.set(seen)
    try:
        yield seen
    finally:
        _row_log.reset(token)


def record_row_access(d: Dataset) -> None:
    seen = _row_log.get()
    if seen is not None:
        seen.update(int(i) for i in d.row_ids)


# -- loading ------------------------------------------------------------------

def _parse_target(raw: list[str], path) -> tuple[np.ndarray, tuple[str, ...]]:
    mapping: dict[str, int] = {}
    labels = np.empty(len(raw), dtype=np.int64)
    for i, v in enumerate(raw):
        v = v.strip()
        if v in MISSING_TOKENS:
            raise DataError(f"{path}: missing target value on data row {i + 1}")
        try:
            num = float(v)
        except ValueError:
            num = None
        if num is not None:
            if not math.isfinite(num) or num != round(num):
                raise DataError(f"{path}: target value {v!r} is not discrete")
            v = str(int(num))
        labels[i] = mapping.setdefault(v, len(mapping))
    if len(mapping) < 2:
        raise DataError(f"{path}: target has a single class")
    return labels, tuple(mapping)


def load_csv(path, target: str | int, missing_policy: str = "mean_impute") -> Dataset:
    """Read a headed CSV file into a :class:`Dataset`.

    ``target`` is a column name or a zero-based column index. Empty cells and
    ``na``/``NA`` are missing; ``missing_policy`` is ``"mean_impute"``
    (column mean over the whole file), ``"reject"``, or ``"defer"`` (leave NaN
    for a later :func:`impute_mean`, e.g. with training-set means).
    """
    if missing_policy not in ("mean_impute", "reject", "defer"):
        raise ValueError(f"unknown missing_policy {missing_policy!r}")
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError(f"{path}: data row {i + 1} has {len(r)} cells, header has {len(header)}")

    if isinstance(target, str) and target in header:
        t = header.index(target)
    else:
        try:
            t = int(target)
        except (TypeError, ValueError):
            raise DataError(f"{path}: no target column {target!r}") from None
        if not 0 <= t < len(header):
            raise DataError(f"{path}: target index {t} out of range")

    labels, label_names = _parse_target([r[t] for r in body], path)
    cols = [j for j in range(len(header)) if j != t]
    x = np.empty((len(body), len(cols)))
    for i, r in enumerate(body):
        for k, j in enumerate(cols):
            cell = r[j].strip()
            if cell in MISSING_TOKENS:
                x[i, k] = np.nan
                continue
            try:
                x[i, k] = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric value {cell!r} in column {header[j]!r}, "
                                f"data row {i + 1}") from None
    if not np.all(np.isfinite(x) | np.isnan(x)):
        raise DataError(f"{path}: infinite feature values")

    missing = np.isnan(x)
    if missing.any():
        empty = np.flatnonzero(missing.all(axis=0))
        if empty.size:
            raise DataError(f"{path}: column {header[cols[empty[0]]]!r} has no values to impute from")
        if missing_policy == "reject":
            i, k = np.argwhere(missing)[0]
            raise DataError(f"{path}: missing value in column {header[cols[k]]!r}, data row {i + 1}")

    d = Dataset(x, labels, tuple(header[j] for j in cols), len(label_names),
                label_names=label_names,
                meta={"source": str(path), "target": header[t],
                      "label_mapping": {name: i for i, name in enumerate(label_names)},
                      "n_missing": int(missing.sum())})
    if missing_policy == "mean_impute":
        d = impute_mean(d)
    return d


def impute_mean(d: Dataset, means: np.ndarray | None = None) -> Dataset:
    """Replace NaN cells with ``means`` (default: the column means of ``d``)."""
    x = d.features
    miss = np.isnan(x)
    if not miss.any():
        return d
    if means is None:
        if miss.all(axis=0).any():
            raise DataError("cannot impute a column with no observed values")
        means = np.nanmean(x, axis=0)
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (d.n_features,) or not np.all(np.isfinite(means)):
        raise DataError("imputation means must be finite, one per feature")
    return d.with_features(np.where(miss, means, x))


# -- statistics & scaling -----------------------------------------------------

def _matrix(d) -> np.ndarray:
    return d.features if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)


def compute_stats(d) -> FeatureStats:
    """Per-column mean, sample standard deviation (N-1), min and max."""
    x = _matrix(d)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("need at least 2 rows to compute feature statistics")
    mean = x.mean(axis=0)
    lo, hi = x.min(axis=0), x.max(axis=0)
    # keep min <= mean <= max under rounding, and exact zeros for constant columns
    mean = np.clip(mean, lo, hi)
    std = np.where(lo == hi, 0.0, x.std(axis=0, ddof=1))
    return FeatureStats(mean, std, lo, hi)


def normalize(d, stats: FeatureStats):
    """Min-max scale with ``stats``; constant columns become 0.

    Values outside the range seen in ``stats`` extrapolate linearly (no
    clipping). Returns the same kind of object it was given.
    """
    x = _matrix(d)
    if x.ndim != 2 or x.shape[1] != stats.n_features:
        raise DataError(f"stats cover {stats.n_features} features, data has "
                        f"{x.shape[1] if x.ndim == 2 else '?'}")
    span = stats.max - stats.min
    const = span == 0
    out = (x - stats.min) / np.where(const, 1.0, span)
    out[:, const] = 0.0
    return d.with_features(out) if isinstance(d, Dataset) else out


# -- splitting ----------------------------------------------------------------

def _round_half_up(x: Decimal) -> int:
    return int(x.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def split_indices(labels: np.ndarray, spec: SplitSpec, n_classes: int | None = None):
    """Row positions ``(train, test)``; both sorted ascending."""
    labels = np.asarray(labels)
    frac = Decimal(repr(float(spec.train_fraction)))
    rng = derive_rng(spec.seed, "split")
    if not spec.stratified:
        perm = rng.permutation(labels.shape[0])
        k = _round_half_up(frac * labels.shape[0])
        return np.sort(perm[:k]), np.sort(perm[k:])
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes
    train, test = [], []
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        if idx.size < 2:
            raise DataError(f"class {c} has {idx.size} instance; stratified split needs at least 2")
        perm = rng.permutation(idx)
        k = _round_half_up(frac * idx.size)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_split(d: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Per class ``c`` with ``m`` rows, ``round_half_up(fraction * m)`` go to train."""
    tr, te = split_indices(d.labels, spec, d.n_classes)
    return d.take_rows(tr), d.take_rows(te)


# -- synthetic data -----------------------------------------------------------

def synthesize(n_instances: int, n_informative: int, n_noise: int, n_classes: int = 2,
               seed: int = 0, label_noise: float = 0.25) -> tuple[Dataset, np.ndarray]:
    """Synthetic classification data with known informative columns.

    The label is the bin of a linear score over the informative columns
    (weights of magnitude 0.5..1.5 with random signs, plus Gaussian score noise
    of std ``label_noise``), cut at the score quantiles so classes are
    balanced. Noise columns are independent standard normals. Columns are
    shuffled; the informative positions are returned sorted.
    """
    if min(n_instances, n_informative, n_classes) < 1 or n_noise < 0:
        raise ValueError("counts must be positive (n_noise may be 0)")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_instances < 10 * n_classes:
        raise ValueError("need at least 10 instances per class")
    rng = derive_rng(seed, "synthesize")
    p = n_informative + n_noise
    x = rng.standard_normal((n_instances, p))
    w = rng.uniform(0.5, 1.5, n_informative) * rng.choice([-1.0, 1.0], n_informative)
    score = x[:, :n_informative] @ w / np.linalg.norm(w)
    score += label_noise * rng.standard_normal(n_instances)
    cuts = np.quantile(score, np.arange(1, n_classes) / n_classes)
    y = np.searchsorted(cuts, score, side="right")
    order = rng.permutation(p)
    informative = np.sort(np.flatnonzero(order < n_informative))
    x = x[:, order]
    names = tuple(f"x{j}" for j in range(p))
    d = Dataset(x, y, names, n_classes, label_names=tuple(str(c) for c in range(n_classes)),
                meta={"source": "synthetic", "seed": int(seed),
                      "informative": informative.tolist()})
    return d, informative


def write_csv(d: Dataset, path, target_name: str = "target") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = d.label_names or tuple(str(c) for c in range(d.n_classes))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*d.feature_names, target_name])
        for row, lab in zip(d.features, d.labels):
            w.writerow([*(repr(float(v)) for v in row), names[lab]])
