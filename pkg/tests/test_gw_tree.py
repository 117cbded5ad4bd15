from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from satclt.formula import CorrelatedPair, Cnf, sample_correlated_pair
from satclt.gw_tree import (
    PrunedPair,
    TreeSizeExceeded,
    canonical_key,
    count_instances,
    forest_key_histogram,
    format_histogram,
    instance_histogram,
    iter_trees,
    key_histogram,
    local_tree,
    project,
    root_only,
    sample_correlated_tree,
    sample_plain_tree,
    tree_from_key,
    tree_probability,
)
from satclt.rng import stream


def test_root_only_probabilities():
    for d in (0.5, 1.0, 1.7):
        assert math.isclose(tree_probability(root_only(1), d), math.exp(-d))
        for t in (0.0, 0.3, 1.0):
            # Po(t d) shared plus two Po((1 - t) d) distinct clause counts
            p = tree_probability(root_only(1, correlated=True), d, t)
            assert math.isclose(p, math.exp(-d * (2 - t)))


def test_single_child_probability():
    # one clause of a given sign pair, nothing else: (d/4) e^{-d} times the
    # probability that the child (at the truncation depth) is anything
    tree = tree_from_key("(+-())", 1)
    assert math.isclose(tree_probability(tree, 1.2), 0.3 * math.exp(-1.2))
    tree = tree_from_key("(+-()+-())", 1)
    assert math.isclose(tree_probability(tree, 1.2), 0.3**2 / 2 * math.exp(-1.2))


def test_depth_one_probabilities_sum_to_truncated_mass():
    # enumerate offspring counts k_s <= 7 per sign type; the expected mass is
    # P[Po(d/4) <= 7]^4
    d = 1.0
    total = 0.0
    signs = ["++", "+-", "-+", "--"]
    for ks in np.ndindex(8, 8, 8, 8):
        key = "(" + "".join(s + "()" for s, k in zip(signs, ks) for _ in range(k)) + ")"
        total += tree_probability(tree_from_key(key, 1), d)
    mass = sum(math.exp(-d / 4) * (d / 4) ** k / math.factorial(k) for k in range(8)) ** 4
    assert math.isclose(total, mass, rel_tol=1e-12)


def test_key_roundtrip_and_isomorphism():
    rng = stream(0, "keys")
    for _ in range(200):
        tr = sample_correlated_tree(1.5, 0.4, 3, rng)
        key = canonical_key(tr)
        back = tree_from_key(key, 3)
        assert canonical_key(back) == key
        assert back.size == tr.size


def test_key_grammar_examples():
    assert canonical_key(root_only()) == "()"
    assert canonical_key(root_only(correlated=True)) == "(S)"
    tr = tree_from_key("(S++(1)--(S))", 1)
    assert tr.size == 3
    assert tr.klass.tolist() == [0, 1, 0] or tr.klass.tolist() == [0, 0, 1]
    with pytest.raises(ValueError):
        tree_from_key("(S*+())")


def test_sampled_frequencies_match_closed_form():
    d, t, ell = 1.0, 0.5, 1
    hist = key_histogram(iter_trees(d, ell, 40_000, stream(1, "freq"), t=t))
    for key, c in hist.most_common(6):
        p = tree_probability(tree_from_key(key, ell), d, t)
        se = math.sqrt(p * (1 - p) / 40_000)
        assert abs(c / 40_000 - p) < 5 * se


def test_forest_sampler_agrees_with_single_tree_sampler():
    d, ell = 1.5, 2
    a = forest_key_histogram(d, ell, 30_000, stream(2, "forest"))
    b = key_histogram(iter_trees(d, ell, 30_000, stream(3, "single")))
    for key in [k for k, _ in b.most_common(5)]:
        pa, pb = a[key] / 30_000, b[key] / 30_000
        se = math.sqrt(2 * pb * (1 - pb) / 30_000)
        assert abs(pa - pb) < 5 * se


def test_projection_removes_other_class():
    tr = sample_correlated_tree(2.0, 0.3, 3, stream(5, "proj"))
    for h in (1, 2):
        p = project(tr, h)
        assert p.size == int(np.sum(tr.klass != 3 - h))
        assert not p.correlated
        assert np.all(p.parent[1:] < np.arange(1, p.size))
    t1 = sample_correlated_tree(1.0, 1.0, 3, stream(6, "proj"))
    assert canonical_key(project(t1, 1)) == canonical_key(project(t1, 2))


def test_size_cap():
    with pytest.raises(TreeSizeExceeded):
        sample_plain_tree(3.0, 12, stream(7, "cap"), cap=50)


def test_tree_to_cnf_is_a_tree():
    tr = sample_plain_tree(1.8, 3, stream(8, "cnf"))
    cnf = tr.to_cnf()
    assert cnf.m == tr.size - 1


def test_histogram_csv_is_sorted():
    h = Counter({"(S)": 3, "(S++(1))": 5, "(S--(S))": 5})
    assert format_histogram(h) == "key,count\n(S++(1)),5\n(S--(S)),5\n(S),3\n"


# -- instances in a correlated pair -------------------------------------


def _pair(shared, p1, p2, n):
    return CorrelatedPair(n, tuple(shared), tuple(p1), tuple(p2))


def test_local_tree_labels_by_clause_origin():
    # shared clause (1 or 2); private to formula 1: (-1 or 3); to formula 2: (1 or -4)
    pair = _pair([(1, 2)], [(-1, 3)], [(1, -4)], 5)
    pp = PrunedPair.of(pair)
    tr = local_tree(pp, 1, 1)
    assert canonical_key(tr) == "(S++(S)+-(2)-+(1))"
    assert sorted(tr.klass.tolist()) == [0, 0, 1, 2]
    # variable 5 is isolated
    assert canonical_key(local_tree(pp, 5, 1)) == "(S)"


def test_local_tree_rejects_cycles():
    pair = _pair([(1, 2), (2, 3), (3, -1)], [], [], 3)
    assert local_tree(PrunedPair.of(pair), 1, 2) is None
    # radius too small to see the cycle: still a tree
    assert local_tree(PrunedPair.of(pair), 1, 1) is not None


def test_ell_zero_every_variable_is_root_only():
    pair = sample_correlated_pair(500, 300, 200, stream(9, "zero"))
    pp = PrunedPair.of(pair)
    hist = instance_histogram(pp, 0)
    assert hist.frequency("(S)") == 1.0
    assert count_instances(pp, root_only(0, correlated=True), 0) == 500


def test_instance_frequencies_track_gw_law():
    n, d, t = 20_000, 1.0, 0.5
    pair = sample_correlated_pair(n, 5000, 5000, stream(10, "lwc"))
    hist = instance_histogram(PrunedPair.of(pair), 1)
    for key in ("(S)", "(S++(S))", "(S++(1))"):
        p = tree_probability(tree_from_key(key, 1), d, t)
        assert abs(hist.frequency(key) - p) < 0.01


def test_iter_trees_plain_and_correlated():
    trees = list(iter_trees(1.0, 2, 5, stream(11, "it")))
    assert all(not tr.correlated for tr in trees)
    trees = list(iter_trees(1.0, 2, 5, stream(11, "it"), t=0.2))
    assert all(tr.correlated for tr in trees)
