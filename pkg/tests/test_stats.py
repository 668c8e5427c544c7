import itertools
import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noise_boruta.stats import (mann_whitney_counts, mann_whitney_u, prediction_entropy,
                                shapiro_wilk, t_test_two_sample)
from oracles import enumerate_mann_whitney_p

# W and p from scipy.stats.shapiro 1.15.3 (a Royston AS R94 implementation)
SHAPIRO_REFERENCE = [
    ([NormalDist().inv_cdf((i - 0.375) / 20.25) for i in range(1, 21)],
     0.997179693088336, 0.9999999754926056),
    ([float(i ** 3) for i in range(1, 51)], 0.8279356825233611, 4.115463694367135e-06),
    ([2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8], 0.9401366781979513, 0.6399513746153818),
    ([0.05, 0.13, 0.21, 0.37, 0.42, 0.48, 0.55, 0.61, 0.74, 0.83, 0.91, 0.97],
     0.963214226220241, 0.8285399358948746),
    ([1.0, 1.2, 0.9, 1.1, 1.05, 0.95, 1.15, 6.0, 1.0, 0.98, 1.02],
     0.39897621204124345, 9.545476502867541e-08),
]


# -- entropy ------------------------------------------------------------------

@pytest.mark.parametrize("p,h", [((1.0, 0.0), 0.0), ((0.5, 0.5), 1.0),
                                 ((0.25, 0.75), -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75)))])
def test_entropy_examples(p, h):
    rec = prediction_entropy(np.array([p]), [0], [0])
    assert abs(rec.entropy[0] - h) <= 1e-9
    assert rec.correct.tolist() == [True]


def test_entropy_rejects_bad_rows():
    with pytest.raises(ValueError):
        prediction_entropy(np.array([[0.5, 0.6]]), [0], [0])
    with pytest.raises(ValueError):
        prediction_entropy(np.array([[1.0]]), [0], [0])


@given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.randoms())
def test_entropy_properties(raw, rnd):
    p = np.array(raw)
    if p.sum() == 0:
        return
    p = p / p.sum()
    h = prediction_entropy(p[None], [0], [1]).entropy[0]
    assert 0.0 <= h <= 1.0
    q = p.copy()
    rnd.shuffle(q)
    assert prediction_entropy(q[None], [0], [1]).entropy[0] == pytest.approx(h, abs=1e-12)
    if np.count_nonzero(p) == 1:
        assert h == 0.0


def test_entropy_max_only_at_uniform():
    c = 4
    assert prediction_entropy(np.full((1, c), 1 / c), [0], [0]).entropy[0] == pytest.approx(1.0)
    assert prediction_entropy(np.array([[0.3, 0.2, 0.25, 0.25]]), [0], [0]).entropy[0] < 1.0


# -- Shapiro-Wilk -------------------------------------------------------------

@pytest.mark.parametrize("x,w,p", SHAPIRO_REFERENCE)
def test_shapiro_matches_reference(x, w, p):
    r = shapiro_wilk(x)
    assert abs(r.statistic - w) < 1e-3
    assert abs(r.p_value - p) < 1e-3


def test_shapiro_examples():
    scores = [NormalDist().inv_cdf((i - 0.5) / 100) for i in range(1, 101)]
    assert shapiro_wilk(scores).p_value > 0.05
    assert shapiro_wilk([float(i) ** 3 for i in range(1, 51)]).p_value < 0.01
    with pytest.raises(ValueError):
        shapiro_wilk([1.0, 2.0])
    with pytest.raises(ValueError):
        shapiro_wilk([3.0] * 10)


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=60), st.floats(0.01, 100),
       st.floats(-100, 100))
def test_shapiro_bounds_and_affine_invariance(x, a, b):
    x = np.array(x)
    if np.ptp(x) < 1e-6:
        return
    r = shapiro_wilk(x)
    assert 0.0 < r.statistic <= 1.0 and 0.0 <= r.p_value <= 1.0
    assert shapiro_wilk(a * x + b).statistic == pytest.approx(r.statistic, abs=1e-9)


# -- t-test -------------------------------------------------------------------

def test_t_examples():
    x = [1.0, 2.0, 3.0]
    same = t_test_two_sample(x, x)
    assert same.statistic == 0.0 and same.p_value == 1.0
    assert t_test_two_sample(x, [v + 10 for v in x]).p_value < 0.01
    with pytest.raises(ValueError):
        t_test_two_sample([1.0], [2.0, 3.0])
    with pytest.raises(ValueError):
        t_test_two_sample([1.0, 1.0], [2.0, 2.0])


@pytest.mark.parametrize("variant", ["student_pooled", "welch"])
def test_t_matches_scipy_and_is_symmetric(variant):
    from scipy import stats
    rng = np.random.default_rng(1)
    x, y = rng.normal(0, 1, 12), rng.normal(0.8, 2, 9)
    r = t_test_two_sample(x, y, variant)
    ref = stats.ttest_ind(x, y, equal_var=variant == "student_pooled")
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-8)
    flipped = t_test_two_sample(y, x, variant)
    assert flipped.statistic == -r.statistic and flipped.p_value == r.p_value


# -- Mann-Whitney -------------------------------------------------------------

def test_mann_whitney_examples():
    r = mann_whitney_u([1, 2], [3, 4])
    assert r.statistic == 0 and r.p_value == pytest.approx(1 / 3)
    assert "exact" in r.method_notes
    assert mann_whitney_u([1.0], [2.0]).p_value == 1.0
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def all_tie_free_samples(max_size=6):
    """Every rank pattern of two tie-free samples with sizes up to ``max_size``."""
    for n in range(1, max_size + 1):
        for m in range(1, max_size + 1):
            for pos in itertools.combinations(range(n + m), n):
                chosen = set(pos)
                yield ([float(r) for r in pos],
                       [float(r) for r in range(n + m) if r not in chosen])


def test_exact_matches_enumeration_for_all_small_sizes():
    for x, y in all_tie_free_samples():
        assert mann_whitney_u(x, y, method="exact").p_value == enumerate_mann_whitney_p(x, y)


def test_exact_distribution_sums_to_total():
    for n, m in itertools.product(range(1, 8), repeat=2):
        assert sum(mann_whitney_counts(n, m)) == math.comb(n + m, n)


def test_exact_and_normal_paths_agree():
    rng = np.random.default_rng(3)
    for _ in range(5):
        x, y = rng.normal(0, 1, 15), rng.normal(0.5, 1, 15)
        exact = mann_whitney_u(x, y, method="exact").p_value
        approx = mann_whitney_u(x, y, method="asymptotic").p_value
        assert abs(exact - approx) < 0.02


def test_ties_use_corrected_normal_approximation():
    from scipy import stats
    x, y = [1, 2, 2, 3, 3, 3], [2, 3, 4, 4, 5]
    r = mann_whitney_u(x, y)
    assert "tie correction" in r.method_notes
    ref = stats.mannwhitneyu(x, y, method="asymptotic", use_continuity=True)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=25),
       st.lists(st.integers(0, 20), min_size=1, max_size=25))
def test_mann_whitney_invariants(x, y):
    r = mann_whitney_u(x, y)
    assert r.extra["u_x"] + r.extra["u_y"] == len(x) * len(y)
    assert 0.0 <= r.p_value <= 1.0
