import random

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from oracles import counting_ranks, normal_equation_fit, textbook_pearson
from scatterscore.errors import LengthMismatch, TooFewPoints, ZeroVariance
from scatterscore.metrics import linreg_r2, mse, pcc, report, srcc

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_mse_examples():
    assert mse([1, 2, 3], [1, 2, 3]) == 0.0
    assert mse([1, 2], [2, 4]) == 2.5
    assert mse(np.array([1, 2]) + 7, np.array([2, 4]) + 7) == 2.5


def test_input_validation():
    with pytest.raises(LengthMismatch):
        mse([1, 2], [1, 2, 3])
    with pytest.raises(TooFewPoints):
        pcc([1], [1])
    with pytest.raises(ZeroVariance):
        pcc([1, 1, 1], [1, 2, 3])
    with pytest.raises(ZeroVariance):
        srcc([1, 2, 3], [4, 4, 4])
    with pytest.raises(ValueError):
        mse([1, np.nan], [1, 2])


def test_pcc_examples():
    x = np.arange(10.0)
    assert pcc(x, 2 * x + 3) == pytest.approx(1.0, abs=1e-15)
    assert pcc(x, -x) == pytest.approx(-1.0, abs=1e-15)


def test_srcc_examples():
    x = np.linspace(0.1, 3, 20)
    assert srcc(x, np.exp(x)) == 1.0
    assert srcc(x, x[::-1]) == -1.0


def test_pcc_matches_textbook_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y = rng.standard_normal(50), rng.standard_normal(50)
        assert abs(pcc(x, y) - textbook_pearson(x, y)) < 1e-12


def test_srcc_with_ties_matches_counting_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.integers(0, 6, 50).astype(float)
        y = rng.integers(0, 11, 50).astype(float)
        ref = textbook_pearson(counting_ranks(x), counting_ranks(y))
        assert abs(srcc(x, y) - ref) < 1e-12


def test_linreg_exact_line():
    x = np.arange(8.0)
    fit = linreg_r2(x, 3 * x - 1)
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(-1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_linreg_independent_in_sample_near_zero():
    rng = np.random.default_rng(2)
    fit = linreg_r2(rng.standard_normal(5000), rng.standard_normal(5000))
    assert 0.0 <= fit.r2 < 0.005


def test_linreg_matches_normal_equations():
    rng = np.random.default_rng(3)
    for _ in range(10):
        x, y = rng.standard_normal(50), rng.standard_normal(50) + 0.5 * np.arange(50) / 50
        fit = linreg_r2(x, y)
        slope, intercept, r2 = normal_equation_fit(x, y)
        assert abs(fit.slope - slope) < 1e-10
        assert abs(fit.intercept - intercept) < 1e-10
        assert abs(fit.r2 - r2) < 1e-10


def test_linreg_held_out_can_be_negative():
    x = np.array([0.0, 1, 2, 3])
    y = np.array([0.0, 1, 2, 3])
    fit = linreg_r2(x, y, eval_x=[0, 1, 2, 3], eval_y=[3.0, 2, 1, 0])
    assert fit.r2 < 0
    slope, intercept, r2 = normal_equation_fit(x, y, [0, 1, 2, 3], [3.0, 2, 1, 0])
    assert fit.r2 == pytest.approx(r2, abs=1e-12)


def test_linreg_constant_regressor():
    with pytest.raises(ZeroVariance):
        linreg_r2([1, 1, 1], [1, 2, 3])


def test_report_handles_constant_predictions():
    r = report([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert r["pcc"] is None and r["srcc"] is None
    assert r["mse"] == pytest.approx(2 / 3)
    assert r["n"] == 3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=40),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_pcc_affine_invariance(pairs, a, b):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
        return
    r = pcc(x, y)
    assert pcc(a * x + b, y) == pytest.approx(r, abs=1e-9)
    assert pcc(x, -y) == pytest.approx(-r, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), min_size=3, max_size=30))
def test_srcc_is_pcc_on_average_ranks(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    assert srcc(x, y) == pytest.approx(pcc(counting_ranks(x), counting_ranks(y)), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=30), st.randoms())
@example([(0.0, 0.0), (0.0, 2.2285857918421854e-220)], random.Random(0))
def test_mse_nonnegative_and_permutation_equivariant(pairs, rnd):
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    m = mse(x, y)
    assert m >= 0
    if np.array_equal(x, y):
        assert m == 0
    if np.max(np.abs(x - y)) > 1e-150:  # smaller differences underflow when squared
        assert m > 0
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    assert mse(x[perm], y[perm]) == pytest.approx(m, rel=1e-12, abs=1e-300)
    if np.ptp(x) > 1e-3 and np.ptp(y) > 1e-3:
        assert pcc(x[perm], y[perm]) == pytest.approx(pcc(x, y), abs=1e-12)
        assert srcc(x[perm], y[perm]) == pytest.approx(srcc(x, y), abs=1e-12)
