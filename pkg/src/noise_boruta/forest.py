"""Random forest classifier with out-of-bag permutation importance.

Trees are CART with Gini impurity, grown on bootstrap samples, with
``floor(sqrt(p))`` candidate features drawn without replacement at each node.
A fitted tree is a set of flat node arrays (index 0 is the root, ``left == -1``
marks a leaf), which keeps the numba kernels simple.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._rng import derive_rng, derive_seed

OOB_PERMUTATION = "oob_permutation"
ZSCORE = "zscore"


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    class_counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def leaf_class(self) -> np.ndarray:
        return np.argmax(self.class_counts, axis=1)

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.left >= 0])

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _predict_tree(self.feature, self.threshold, self.left, self.right,
                             self.leaf_class, x)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: list[Tree]
    oob_indices: list[np.ndarray]
    n_estimators: int
    max_depth: int | None
    seed: int
    n_features: int
    n_classes: int
    n_train: int


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    scores: np.ndarray
    max_shadow: float
    method: str
    per_tree: np.ndarray | None = None


# -- numba kernels ------------------------------------------------------------

@njit(cache=True, nogil=True)
def _splitmix(state):
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _build_tree(X, y, sample, n_classes, max_features, max_depth, min_samples_split, seed):
    n = sample.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes), np.int64)

    idx = sample.copy()
    buf = np.empty(n, np.int64)
    vals = np.empty(n)
    feats = np.arange(p)
    lc = np.zeros(n_classes, np.int64)
    rc = np.zeros(n_classes, np.int64)
    state = np.array([seed], np.uint64)

    stack = np.empty((cap, 4), np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        m = end - start
        for i in range(start, end):
            counts[node, y[idx[i]]] += 1
        n_present = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                n_present += 1
        if n_present < 2 or m < min_samples_split or (max_depth >= 0 and depth >= max_depth):
            continue

        best_score = -1.0
        best_f = -1
        best_t = 0.0
        for k in range(max_features):
            r = k + np.int64(_splitmix(state) % np.uint64(p - k))
            tmp = feats[k]
            feats[k] = feats[r]
            feats[r] = tmp
            f = feats[k]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m])
            sum_l2 = 0
            sum_r2 = 0
            for c in range(n_classes):
                lc[c] = 0
                rc[c] = counts[node, c]
                sum_r2 += rc[c] * rc[c]
            for i in range(m - 1):
                c = y[idx[start + order[i]]]
                sum_l2 += 2 * lc[c] + 1
                lc[c] += 1
                sum_r2 -= 2 * rc[c] - 1
                rc[c] -= 1
                v = vals[order[i]]
                vn = vals[order[i + 1]]
                if vn <= v:
                    continue
                nl = i + 1
                # maximising sum_k n_k^2 / n over children minimises weighted Gini
                score = sum_l2 / nl + sum_r2 / (m - nl)
                t = v + (vn - v) / 2.0
                if t >= vn:
                    t = v
                if (score > best_score
                        or (score == best_score
                            and (f < best_f or (f == best_f and t < best_t)))):
                    best_score = score
                    best_f = f
                    best_t = t
        if best_f < 0:
            continue

        lo = start
        hi = 0
        for i in range(start, end):
            row = idx[i]
            if X[row, best_f] <= best_t:
                idx[lo] = row
                lo += 1
            else:
                buf[hi] = row
                hi += 1
        for i in range(hi):
            idx[lo + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        stack[sp, 0] = n_nodes + 1
        stack[sp, 1] = lo
        stack[sp, 2] = end
        stack[sp, 3] = depth + 1
        stack[sp + 1, 0] = n_nodes
        stack[sp + 1, 1] = start
        stack[sp + 1, 2] = lo
        stack[sp + 1, 3] = depth + 1
        sp += 2
        n_nodes += 2

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _predict_tree(feature, threshold, left, right, leaf_class, X):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = leaf_class[node]
    return out


@njit(cache=True, nogil=True)
def _oob_correct(feature, threshold, left, right, leaf_class, X, y, oob, perms, used):
    """Correct OOB votes before and after permuting each feature in turn."""
    m = oob.shape[0]
    p = X.shape[1]
    base = 0
    for i in range(m):
        row = oob[i]
        node = 0
        while left[node] >= 0:
            if X[row, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        if leaf_class[node] == y[row]:
            base += 1
    permuted = np.full(p, base, np.int64)
    for f in range(p):
        if not used[f]:
            continue
        correct = 0
        for i in range(m):
            row = oob[i]
            donor = oob[perms[f, i]]
            node = 0
            while left[node] >= 0:
                g = feature[node]
                v = X[donor, g] if g == f else X[row, g]
                if v <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            if leaf_class[node] == y[row]:
                correct += 1
        permuted[f] = correct
    return base, permuted


# -- public API ---------------------------------------------------------------

def _check_xy(x, y):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"bad shapes: features {x.shape}, labels {y.shape}")
    return x, y


def bootstrap_sample(seed: int, tree_index: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap rows (``n`` draws with replacement) and the out-of-bag rows."""
    sample = derive_rng(seed, "bootstrap", tree_index).integers(0, n, n)
    oob = np.setdiff1d(np.arange(n), sample)
    return sample, oob


def _fit_one(x, y, n_classes, max_features, max_depth, min_samples_split, seed, t):
    sample, oob = bootstrap_sample(seed, t, x.shape[0])
    arrays = _build_tree(x, y, sample, n_classes, max_features,
                         -1 if max_depth is None else int(max_depth), min_samples_split,
                         np.uint64(derive_seed(seed, "tree", t)))
    return Tree(*arrays), oob


def fit_forest(x, y, n_estimators: int = 100, max_depth: int | None = None, seed: int = 0,
               n_classes: int | None = None, max_features: int | None = None,
               min_samples_split: int = 2, n_jobs: int = 1) -> ForestModel:
    """Grow ``n_estimators`` trees; tree ``t`` depends only on ``(seed, t)``."""
    x, y = _check_xy(x, y)
    if n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    if x.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if np.unique(y).size < 2:
        raise ValueError("need at least 2 classes present")
    p = x.shape[1]
    if max_features is None:
        max_features = max(1, math.isqrt(p))
    max_features = min(int(max_features), p)

    def job(t):
        return _fit_one(x, y, n_classes, max_features, max_depth, min_samples_split, seed, t)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            fitted = list(pool.map(job, range(n_estimators)))
    else:
        fitted = [job(t) for t in range(n_estimators)]
    return ForestModel([f[0] for f in fitted], [f[1] for f in fitted], n_estimators,
                       max_depth, seed, p, n_classes, x.shape[0])


def tree_votes(m: ForestModel, rows) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != m.n_features:
        raise ValueError(f"forest was fit on {m.n_features} features")
    return np.stack([t.predict(rows) for t in m.trees])


def predict_forest(m: ForestModel, rows) -> np.ndarray:
    """Majority vote over trees; ties go to the smallest class index."""
    votes = tree_votes(m, rows)
    tally = np.zeros((votes.shape[1], m.n_classes), dtype=np.int64)
    for v in votes:
        tally[np.arange(v.shape[0]), v] += 1
    return np.argmax(tally, axis=1)


def oob_permutations(seed: int, tree_index: int, n_features: int, n_oob: int) -> np.ndarray:
    """Row ``f`` is the shuffle applied to feature ``f`` within the tree's OOB rows."""
    rng = derive_rng(seed, "oob-permute", tree_index)
    return rng.permuted(np.tile(np.arange(n_oob), (n_features, 1)), axis=1)


def per_tree_importance(m: ForestModel, x, y, seed: int) -> np.ndarray:
    """``(V_orig - V_perm) / |OOB_t|`` for every tree with OOB rows, one row per tree."""
    x, y = _check_xy(x, y)
    if x.shape != (m.n_train, m.n_features):
        raise ValueError("importance must be evaluated on the training matrix")
    rows = []
    for t, (tree, oob) in enumerate(zip(m.trees, m.oob_indices)):
        if oob.size == 0:
            continue
        perms = oob_permutations(seed, t, m.n_features, oob.size)
        used = np.zeros(m.n_features, dtype=np.bool_)
        used[tree.used_features()] = True
        base, permuted = _oob_correct(tree.feature, tree.threshold, tree.left, tree.right,
                                      tree.leaf_class, x, y, oob, perms, used)
        rows.append((base - permuted) / oob.size)
    if not rows:
        raise ValueError("no tree has out-of-bag rows")
    return np.array(rows)


def _max_shadow(scores: np.ndarray, shadow_from: int | None) -> float:
    if shadow_from is None or shadow_from >= scores.shape[0]:
        return float("nan")
    return float(scores[shadow_from:].max())


def oob_importance(m: ForestModel, x, y, seed: int, shadow_from: int | None = None) -> ImportanceReport:
    """Mean over trees of the OOB permutation drop in correct votes.

    Columns from ``shadow_from`` onwards are treated as shadows for
    ``max_shadow``.
    """
    per_tree = per_tree_importance(m, x, y, seed)
    scores = per_tree.mean(axis=0)
    return ImportanceReport(scores, _max_shadow(scores, shadow_from), OOB_PERMUTATION, per_tree)


def zscore_from_per_tree(per_tree: np.ndarray) -> np.ndarray:
    if per_tree.shape[0] < 2:
        raise ValueError("z-score importance needs at least 2 trees with OOB rows")
    mean = per_tree.mean(axis=0)
    std = per_tree.std(axis=0, ddof=1)
    spread = (per_tree.max(axis=0) > per_tree.min(axis=0)) & (std > 0)
    return np.where(spread, mean / np.where(spread, std, 1.0), 0.0)


def zscore_importance(m: ForestModel, x, y, seed: int, shadow_from: int | None = None) -> ImportanceReport:
    """Mean per-tree importance divided by its (N-1) standard deviation; 0 where that is 0."""
    per_tree = per_tree_importance(m, x, y, seed)
    scores = zscore_from_per_tree(per_tree)
    return ImportanceReport(scores, _max_shadow(scores, shadow_from), ZSCORE, per_tree)
