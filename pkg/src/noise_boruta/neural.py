"""Shallow feed-forward classifier and perturbation-based feature importance.

The network is fully connected with ReLU hidden layers and a softmax output,
trained on mean cross-entropy by plain mini-batch gradient descent. Weights
are stored as ``(fan_in, fan_out)`` matrices so a forward step is
``a @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import derive_rng
from .dataset import FeatureStats

SHIFT = "shift"
GAUSSIAN = "gaussian"
BINARY_POSITIVE = "binary_positive"
MACRO = "macro"


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class MlpSpec:
    hidden_layers: tuple[int, ...] = (5,)
    epochs: int = 100
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError("hidden_layers must be a non-empty list of positive sizes")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def with_seed(self, seed: int) -> "MlpSpec":
        return replace(self, seed=int(seed))


@dataclass(eq=False)
class MlpModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    spec: MlpSpec
    loss_history: list[float] = field(default_factory=list)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass(frozen=True, eq=False)
class PerturbationScore:
    baseline_f1: float
    raw_drops: np.ndarray
    normalized: np.ndarray
    n_multiplier: float
    degenerate: bool


# -- network ------------------------------------------------------------------

def init_mlp(input_dim: int, output_dim: int, spec: MlpSpec) -> MlpModel:
    """Glorot-uniform weights, zero biases, drawn from ``seed/mlp-init``."""
    rng = derive_rng(spec.seed, "mlp-init")
    dims = [input_dim, *spec.hidden_layers, output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, spec)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(weights, biases, x, start: int = 0, z_first=None):
    """Pre-activations and activations; optionally resume from a given first-layer input."""
    acts = [x]
    pre = []
    a = x
    for i in range(start, len(weights)):
        z = z_first if (i == start and z_first is not None) else a @ weights[i] + biases[i]
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(weights) - 1 else softmax(z)
        acts.append(a)
    return pre, acts


def loss_and_grads(weights, biases, x, y):
    """Mean cross-entropy and its gradients with respect to every parameter."""
    pre, acts = _forward(weights, biases, x)
    probs = acts[-1]
    n = x.shape[0]
    picked = probs[np.arange(n), y]
    with np.errstate(divide="ignore"):
        loss = float(-np.mean(np.log(picked)))
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ weights[i].T) * (pre[i - 1] > 0)
    return loss, gw, gb


def train_mlp(x, y, spec: MlpSpec, n_classes: int | None = None) -> MlpModel:
    """Mini-batch gradient descent; batch order comes from ``seed/mlp-batches``.

    Raises :class:`TrainingDiverged` if the epoch loss or any parameter goes
    non-finite.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"bad shapes: features {x.shape}, labels {y.shape}")
    n_classes = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    model = init_mlp(x.shape[1], n_classes, spec)
    w, b = model.weights, model.biases
    rng = derive_rng(spec.seed, "mlp-batches")
    n = x.shape[0]
    lr = spec.learning_rate
    for epoch in range(spec.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, spec.batch_size):
            batch = order[s:s + spec.batch_size]
            loss, gw, gb = loss_and_grads(w, b, x[batch], y[batch])
            total += loss * batch.shape[0]
            if lr:
                for i in range(len(w)):
                    w[i] -= lr * gw[i]
                    b[i] -= lr * gb[i]
        total /= n
        if not np.isfinite(total) or not all(np.all(np.isfinite(a)) for a in w):
            raise TrainingDiverged(epoch)
        model.loss_history.append(total)
    return model


def _check_rows(m: MlpModel, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != m.input_dim:
        raise ValueError(f"model expects {m.input_dim} features, got shape {rows.shape}")
    return rows


def predict_proba(m: MlpModel, rows) -> np.ndarray:
    return _forward(m.weights, m.biases, _check_rows(m, rows))[1][-1]


def predict(m: MlpModel, rows) -> np.ndarray:
    return np.argmax(predict_proba(m, rows), axis=1)


# -- F1 -----------------------------------------------------------------------

def default_averaging(n_classes: int) -> str:
    return BINARY_POSITIVE if n_classes == 2 else MACRO


def _f1_for(y_true, y_pred, c) -> float:
    tp = np.count_nonzero((y_pred == c) & (y_true == c))
    fp = np.count_nonzero((y_pred == c) & (y_true != c))
    fn = np.count_nonzero((y_pred != c) & (y_true == c))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_score(y_true, y_pred, averaging: str = BINARY_POSITIVE) -> float:
    """F1 of class 1 (``binary_positive``) or the unweighted mean over the
    classes present in either vector (``macro``)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("f1_score of empty vectors")
    if averaging == BINARY_POSITIVE:
        return _f1_for(y_true, y_pred, 1)
    if averaging == MACRO:
        classes = np.union1d(y_true, y_pred)
        return float(np.mean([_f1_for(y_true, y_pred, c) for c in classes]))
    raise ValueError(f"unknown averaging {averaging!r}")


# -- perturbation importance --------------------------------------------------

def _perturbed_column(col: np.ndarray, n: float, sigma: float, rng, mode: str) -> np.ndarray:
    if mode == SHIFT:
        moved = col + (1.0 + n * sigma)
    elif mode == GAUSSIAN:
        moved = col + rng.normal(0.0, n * sigma, col.shape[0])
    else:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    return moved[rng.permutation(col.shape[0])]


def perturb_feature(rows, f: int, n: float, sigma_f: float, seed: int, mode: str = SHIFT) -> np.ndarray:
    """Copy of ``rows`` with column ``f`` shifted by ``1 + n*sigma_f`` and shuffled.

    In ``gaussian`` mode the column gets N(0, n*sigma_f) noise instead of the
    constant shift. The shuffle stream is ``seed/perturb/f``.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if not 0 <= f < rows.shape[1]:
        raise IndexError(f"feature {f} out of range for {rows.shape[1]} columns")
    out = rows.copy()
    out[:, f] = _perturbed_column(rows[:, f], n, sigma_f, derive_rng(seed, "perturb", f), mode)
    return out


def perturbation_importance(m: MlpModel, x, y, stats: FeatureStats | np.ndarray, n: float,
                            seed: int, mode: str = SHIFT,
                            averaging: str | None = None) -> PerturbationScore:
    """F1 drop when each input is perturbed in turn (see :func:`perturb_feature`).

    Drops are clamped at 0 and divided by their sum; if every drop is 0 the
    normalized vector is all zeros and the result is flagged ``degenerate``.
    Only the first layer sees the perturbed column, so its pre-activation is
    updated with a rank-one correction instead of a full forward pass.
    """
    x = _check_rows(m, x)
    y = np.asarray(y, dtype=np.int64)
    sigma = stats.std if isinstance(stats, FeatureStats) else np.asarray(stats, dtype=np.float64)
    if sigma.shape != (x.shape[1],):
        raise ValueError("one standard deviation per feature is required")
    if n <= 0:
        raise ValueError("n must be positive")
    averaging = averaging or default_averaging(m.output_dim)
    w, b = m.weights, m.biases
    baseline = f1_score(y, predict(m, x), averaging)
    z1 = x @ w[0] + b[0]
    drops = np.empty(x.shape[1])
    for f in range(x.shape[1]):
        col = _perturbed_column(x[:, f], n, sigma[f], derive_rng(seed, "perturb", f), mode)
        z = z1 + np.outer(col - x[:, f], w[0][f])
        probs = _forward(w, b, x, z_first=z)[1][-1]
        drops[f] = max(baseline - f1_score(y, np.argmax(probs, axis=1), averaging), 0.0)
    total = drops.sum()
    normalized = drops / total if total > 0 else np.zeros_like(drops)
    return PerturbationScore(baseline, drops, normalized, float(n), bool(total <= 0))
