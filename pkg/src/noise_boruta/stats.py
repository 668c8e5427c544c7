"""Prediction entropy and the two-sample comparison tests used by the harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist

import numpy as np
from scipy.special import stdtr

_NORMAL = NormalDist()


@dataclass(frozen=True, eq=False)
class EntropyRecord:
    entropy: np.ndarray
    correct: np.ndarray

    def histogram(self, bins: int = 10) -> dict:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return {
            "edges": edges.tolist(),
            "correct": np.histogram(self.entropy[self.correct], edges)[0].tolist(),
            "incorrect": np.histogram(self.entropy[~self.correct], edges)[0].tolist(),
        }


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    test_name: str
    method_notes: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"test": self.test_name, "statistic": self.statistic, "p_value": self.p_value,
                "notes": self.method_notes, **self.extra}


# -- entropy ------------------------------------------------------------------

def prediction_entropy(probs, y_true, y_pred) -> EntropyRecord:
    """Shannon entropy (bits) of each probability row divided by log2(C)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise ValueError("probabilities must be an (instances, classes>=2) matrix")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("each probability row must be non-negative and sum to 1")
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != (probs.shape[0],) or y_pred.shape != y_true.shape:
        raise ValueError("label vectors must have one entry per probability row")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log2(probs), 0.0)
    h = -terms.sum(axis=1) / math.log2(probs.shape[1])
    return EntropyRecord(np.clip(h, 0.0, 1.0) + 0.0, y_true == y_pred)


# -- Shapiro-Wilk (Royston 1995, AS R94) --------------------------------------

_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(coef, x: float) -> float:
    return sum(c * x ** i for i, c in enumerate(coef))


@lru_cache(maxsize=64)
def _sw_coefficients(n: int) -> np.ndarray:
    """The lower-half weights a_1..a_{n//2} (positive, largest first)."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([_NORMAL.inv_cdf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * float(m @ m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = -m / ssumm2
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1 ** 2 - 2 * a2 ** 2))
        a = -m / fac
        a[1] = a2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1 ** 2))
        a = -m / fac
    a[0] = a1
    return a


def shapiro_wilk(x) -> TestResult:
    """W statistic and p-value for 3 <= N <= 5000."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3..5000 observations, got {n}")
    if x[-1] == x[0]:
        raise ValueError("Shapiro-Wilk is undefined for a constant sample")
    a = _sw_coefficients(n)
    half = a.shape[0]
    xc = x - x.mean()
    num = float(a @ (xc[::-1][:half] - xc[:half])) ** 2
    w = min(num / float(xc @ xc), 1.0)

    if n == 3:
        w = max(w, 0.75)
        p = (6.0 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3.0)
        return TestResult(w, float(min(max(p, 0.0), 1.0)), "shapiro_wilk", "exact n=3 distribution")
    if w >= 1.0:
        return TestResult(w, 1.0, "shapiro_wilk", "Royston AS R94")
    y = math.log(1.0 - w)
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return TestResult(w, 1e-99, "shapiro_wilk", "Royston AS R94, below small-sample bound")
        y = -math.log(gamma - y)
        mu = _poly(_C3, n)
        sigma = math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mu = _poly(_C5, ln)
        sigma = math.exp(_poly(_C6, ln))
    p = 1.0 - _NORMAL.cdf((y - mu) / sigma)
    return TestResult(w, float(min(max(p, 0.0), 1.0)), "shapiro_wilk", "Royston AS R94")


# -- t-test -------------------------------------------------------------------

def t_test_two_sample(x, y, variant: str = "student_pooled") -> TestResult:
    """Two-sided two-sample t-test; ``variant`` is ``student_pooled`` or ``welch``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = x.shape[0], y.shape[0]
    if nx < 2 or ny < 2:
        raise ValueError("each sample needs at least 2 observations")
    vx, vy = x.var(ddof=1), y.var(ddof=1)
    if vx == 0 and vy == 0:
        raise ValueError("at least one sample must have positive variance")
    diff = x.mean() - y.mean()
    if variant == "student_pooled":
        df = nx + ny - 2
        pooled = ((nx - 1) * vx + (ny - 1) * vy) / df
        se = math.sqrt(pooled * (1.0 / nx + 1.0 / ny))
    elif variant == "welch":
        qx, qy = vx / nx, vy / ny
        se = math.sqrt(qx + qy)
        df = (qx + qy) ** 2 / (qx ** 2 / (nx - 1) + qy ** 2 / (ny - 1))
    else:
        raise ValueError(f"unknown t-test variant {variant!r}")
    t = diff / se
    p = 2.0 * stdtr(df, -abs(t))
    return TestResult(float(t), float(min(p, 1.0)), "t_test", variant, {"df": float(df)})


# -- Mann-Whitney U -----------------------------------------------------------

@lru_cache(maxsize=256)
def mann_whitney_counts(n: int, m: int) -> tuple[int, ...]:
    """Number of rank arrangements giving U_x = u, for u = 0..n*m.

    Uses the recurrence on whether the largest observation comes from x
    (it then beats all m values of y) or from y.
    """
    prev = [[1] for _ in range(m + 1)]
    for i in range(1, n + 1):
        cur = [[1]]
        for j in range(1, m + 1):
            poly = [0] * (i * j + 1)
            for k, v in enumerate(prev[j]):
                poly[k + j] += v
            for k, v in enumerate(cur[j - 1]):
                poly[k] += v
            cur.append(poly)
        prev = cur
    return tuple(prev[m])


def _rank_sum_u(x: np.ndarray, y: np.ndarray) -> tuple[float, float, np.ndarray]:
    both = np.concatenate([x, y])
    _, inverse, counts = np.unique(both, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0
    r = avg_rank[inverse]
    n = x.shape[0]
    u_x = float(r[:n].sum() - n * (n + 1) / 2.0)
    return u_x, x.shape[0] * y.shape[0] - u_x, counts


def mann_whitney_u(x, y, method: str = "auto", exact_limit: int = 400) -> TestResult:
    """Two-sided Mann-Whitney U; the statistic reported is min(U_x, U_y).

    ``auto`` uses the exact null distribution when there are no ties and
    n*m <= ``exact_limit``, otherwise the normal approximation with tie and
    continuity corrections.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = x.shape[0], y.shape[0]
    if n < 1 or m < 1:
        raise ValueError("each sample needs at least 1 observation")
    u_x, u_y, counts = _rank_sum_u(x, y)
    u = min(u_x, u_y)
    ties = bool(np.any(counts > 1))
    if method == "auto":
        method = "exact" if (not ties and n * m <= exact_limit) else "asymptotic"
    extra = {"u_x": u_x, "u_y": u_y}
    if method == "exact":
        if ties:
            raise ValueError("the exact distribution assumes no ties")
        dist = mann_whitney_counts(n, m)
        p = 2.0 * sum(dist[: int(u) + 1]) / math.comb(n + m, n)
        return TestResult(u, min(p, 1.0), "mann_whitney_u", "exact", extra)
    if method != "asymptotic":
        raise ValueError(f"unknown method {method!r}")
    total = n + m
    tie_term = float(np.sum(counts ** 3 - counts)) / (total * (total - 1)) if total > 1 else 0.0
    var = n * m / 12.0 * ((total + 1) - tie_term)
    notes = "normal approximation, continuity correction" + (", tie correction" if ties else "")
    if var <= 0:
        return TestResult(u, 1.0, "mann_whitney_u", notes + ", zero variance", extra)
    z = (max(u_x, u_y) - n * m / 2.0 - 0.5) / math.sqrt(var)
    p = 2.0 * (1.0 - _NORMAL.cdf(z)) if z > 0 else 1.0
    return TestResult(u, float(min(p, 1.0)), "mann_whitney_u", notes, extra)
