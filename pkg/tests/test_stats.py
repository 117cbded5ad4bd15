from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from satclt.rng import stream
from satclt.stats import Welford, correlation, kolmogorov_sf, ks_normal, ks_two_sample, merge_tree, standardize

values = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=200)


@given(values)
@settings(max_examples=100, deadline=None)
def test_welford_matches_numpy(xs):
    w = Welford().extend(xs)
    a = np.array(xs)
    assert math.isclose(w.mean, a.mean(), rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(w.variance, a.var(ddof=1), rel_tol=1e-7, abs_tol=1e-7)


@given(values, st.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_merge_equals_sequential(xs, parts):
    chunks = [xs[i::parts] for i in range(parts)]
    merged = merge_tree([Welford().extend(c) for c in chunks])
    whole = Welford().extend(xs)
    assert merged.n == whole.n
    for attr in ("mean", "m2", "m3", "m4"):
        assert math.isclose(getattr(merged, attr), getattr(whole, attr), rel_tol=1e-6, abs_tol=1e-4)


def test_higher_moments_match_scipy():
    x = stream(0, "mom").gamma(2.0, size=5000)
    w = Welford().extend(x)
    assert math.isclose(w.skewness, sps.skew(x), rel_tol=1e-9)
    assert math.isclose(w.excess_kurtosis, sps.kurtosis(x), rel_tol=1e-9)


def test_variance_se_close_to_bootstrap():
    rng = stream(1, "vse")
    x = rng.normal(size=2000)
    w = Welford().extend(x)
    # for normal data se(s^2) ~ s^2 sqrt(2 / (n - 1))
    assert math.isclose(w.variance_se(), w.variance * math.sqrt(2 / 1999), rel_tol=0.1)


def test_degenerate_accumulators():
    w = Welford().extend([1.0])
    assert w.variance == 0.0
    assert w.sem == math.inf
    assert Welford().merge(w).n == 1


@pytest.mark.parametrize("x", [0.2, 0.5, 0.8, 1.0, 1.36, 1.63, 2.5])
def test_kolmogorov_series(x):
    assert math.isclose(kolmogorov_sf(x), sps.kstwobign.sf(x), rel_tol=1e-9, abs_tol=1e-12)


def test_ks_normal_statistic_matches_scipy():
    x = stream(2, "ks").normal(size=500)
    res = ks_normal(x)
    assert math.isclose(res.statistic, sps.kstest(x, "norm").statistic, rel_tol=1e-12)
    assert 0 <= res.pvalue <= 1


def test_ks_two_sample_statistic_matches_scipy():
    rng = stream(3, "ks2")
    a, b = rng.normal(size=400), rng.normal(0.2, size=300)
    assert math.isclose(ks_two_sample(a, b).statistic, sps.ks_2samp(a, b).statistic, rel_tol=1e-12)


def test_ks_detects_shift():
    x = stream(4, "shift").normal(0.5, size=2000)
    assert ks_normal(x).pvalue < 1e-6


def test_rounding_merges_representation_noise():
    a = np.array([0.1 + 0.2] * 10)
    b = np.array([0.3] * 10)
    assert ks_two_sample(a, b).statistic == 1.0
    assert ks_two_sample(a, b, decimals=12).statistic == 0.0


def test_standardize_and_correlation():
    z = standardize([1.0, 2.0, 3.0, 4.0])
    assert math.isclose(z.mean(), 0.0, abs_tol=1e-15) and math.isclose(z.std(ddof=1), 1.0)
    with pytest.raises(ValueError):
        standardize([2.0, 2.0])
    assert math.isclose(correlation([1, 2, 3], [2, 4, 6]), 1.0)
