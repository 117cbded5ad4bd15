from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satclt.dimacs import DimacsError, format_dimacs, parse_dimacs
from satclt.formula import (
    Cnf,
    Literal,
    all_clauses,
    clause_count_for_density,
    clause_key,
    expected_count,
    log_expected_count,
    neighborhood,
    sample_correlated_pair,
    sample_random_cnf,
)
from satclt.rng import child, stream


def test_literal_view_roundtrip():
    assert Literal.of(-7) == (7, -1)
    assert int(Literal.of(-7)) == -7


@pytest.mark.parametrize("bad", [[(1, 1)], [(0, 2)], [(1, 5)], [(1, 2, 3)]])
def test_invalid_clauses_rejected(bad):
    with pytest.raises(ValueError):
        Cnf(4, tuple(bad))


def test_implications_follow_contraposition():
    cnf = Cnf(3, ((1, -2), (-1, 3)))
    imp = cnf.implications
    # clause 1 or -2: -1 -> -2 and 2 -> 1
    assert (0, -2) in imp[-1 + 3]
    assert (0, 1) in imp[2 + 3]
    assert (1, 3) in imp[1 + 3]


@pytest.mark.parametrize(
    "n,d,m",
    [(2000, 1.0, 1000), (10, 1.0, 5), (300, 1.5, 225), (3, 1.0, 2), (5, 0.5, 1), (7, 1.0, 4)],
)
def test_clause_count_rounds_half_up(n, d, m):
    # d n / 2 = 1.5, 1.25, 3.5 round to 2, 1, 4
    assert clause_count_for_density(n, d) == m


def test_first_moment_closed_form():
    assert expected_count(10, 5) == 243.0
    assert math.isclose(math.exp(log_expected_count(10, 5)), 243.0)


def test_all_clauses_enumeration():
    cl = all_clauses(4)
    assert len(cl) == 4 * 6
    assert len({clause_key(c) for c in cl}) == 24


def test_sampler_is_uniform_over_clauses():
    n = 4
    cnf = sample_random_cnf(n, 48_000, stream(0, "uniform"))
    freq = Counter(clause_key(c) for c in cnf.clauses)
    assert set(freq) == {clause_key(c) for c in all_clauses(n)}
    expected = 48_000 / 24
    chi2 = sum((v - expected) ** 2 / expected for v in freq.values())
    # 23 degrees of freedom, the 0.999 quantile is about 49.7
    assert chi2 < 49.7


@given(st.integers(2, 30), st.integers(0, 60), st.integers(0, 2**32))
@settings(max_examples=50, deadline=None)
def test_sampled_clauses_are_valid(n, m, seed):
    cnf = sample_random_cnf(n, m, stream(seed, "valid"))
    assert cnf.m == m
    for a, b in cnf.clauses:
        assert abs(a) != abs(b) and 1 <= abs(a) <= n and 1 <= abs(b) <= n


def test_streams_are_reproducible_and_distinct():
    a = stream(3, "x", 1).integers(0, 2**62, size=4)
    b = stream(3, "x", 1).integers(0, 2**62, size=4)
    c = stream(3, "x", 2).integers(0, 2**62, size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    r1, r2 = stream(1, "p"), stream(1, "p")
    assert child(r1, "c").random() == child(r2, "c").random()


def test_correlated_pair_structure():
    pair = sample_correlated_pair(50, 10, 7, stream(1, "pair"))
    f1, f2 = pair.formula(1), pair.formula(2)
    assert f1.clauses[:10] == f2.clauses[:10] == pair.shared
    assert f1.m == f2.m == 17
    sub = pair.prefix(4, 2)
    assert sub.shared == pair.shared[:4]
    assert sub.private(1) == pair.private1[:2] and sub.private(2) == pair.private2[:2]
    with pytest.raises(ValueError):
        pair.prefix(11, 0)
    with pytest.raises(ValueError):
        pair.private(3)


def test_correlated_pair_with_no_private_clauses_is_one_formula():
    pair = sample_correlated_pair(20, 9, 0, stream(2, "pair"))
    assert pair.formula(1) == pair.formula(2)


def test_neighborhood_of_a_path():
    cnf = Cnf(5, ((1, 2), (2, -3), (3, 4), (4, 5)))
    nb = neighborhood(cnf, 3, 4)
    assert nb.variables == {1, 2, 3, 4, 5}
    assert nb.boundary == {1, 5}
    assert nb.is_tree()
    with pytest.raises(ValueError):
        neighborhood(cnf, 3, 3)


def test_neighborhood_detects_cycle():
    cnf = Cnf(3, ((1, 2), (2, 3), (-3, 1)))
    assert not neighborhood(cnf, 1, 4).is_tree()


def test_multiset_ignores_order():
    assert Cnf(3, ((1, 2), (-3, 2))).multiset() == Cnf(3, ((2, -3), (2, 1))).multiset()


# -- DIMACS ---------------------------------------------------------------


@given(st.integers(2, 20), st.integers(0, 30), st.integers(0, 2**32))
@settings(max_examples=40, deadline=None)
def test_dimacs_roundtrip(n, m, seed):
    cnf = sample_random_cnf(n, m, stream(seed, "dimacs"))
    assert parse_dimacs(format_dimacs(cnf, ["comment"])) == cnf


def test_dimacs_accepts_split_clauses_and_comments():
    text = "c hello\np cnf 3 2\n1 -2\n0 2 3 0\n%\n"
    assert parse_dimacs(text) == Cnf(3, ((1, -2), (2, 3)))


@pytest.mark.parametrize(
    "text",
    [
        "1 2 0\n",
        "p cnf 3 1\n1 2 3 0\n",
        "p cnf 3 2\n1 2 0\n",
        "p cnf 3 1\n1 2\n",
        "p cnf 2 1\n1 3 0\n",
        "p dnf 2 1\n1 2 0\n",
        "",
    ],
)
def test_dimacs_errors(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)
