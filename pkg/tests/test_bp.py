from __future__ import annotations

import json
import math

import numpy as np
import pytest

from oracles import naive_count
from satclt.bp import (
    MessageSet,
    bp_marginals,
    boundary_influence,
    boundary_influence_bruteforce,
    correlated_root_marginals,
    exact_root_marginal,
    root_marginal_upward,
    run_bp,
    tree_record,
    tree_root_marginal,
)
from satclt.formula import Cnf
from satclt.gw_tree import project, root_only, sample_correlated_tree, sample_plain_tree, tree_from_key
from satclt.rng import stream


def test_single_clause_marginal():
    # (x1 or x2): 3 models, x1 true in 2
    cnf = Cnf(2, ((1, 2),))
    marg = bp_marginals(cnf, run_bp(cnf, 3))
    assert math.isclose(marg[1], 2 / 3)
    assert math.isclose(marg[2], 2 / 3)


def test_bp_exact_on_small_trees():
    rng = stream(0, "bp")
    for _ in range(60):
        tr = sample_plain_tree(1.5, 3, rng)
        cnf = tr.to_cnf()
        if cnf.n > 14:
            continue
        exact = naive_count(cnf, [1]) / naive_count(cnf)
        assert abs(tree_root_marginal(tr) - exact) < 1e-12
        assert abs(root_marginal_upward(tr) - exact) < 1e-12


def test_upward_pass_equals_counting_on_larger_trees():
    rng = stream(1, "bp")
    for _ in range(100):
        tr = sample_plain_tree(1.8, 4, rng)
        assert abs(root_marginal_upward(tr) - exact_root_marginal(tr)) <= 1e-10


def test_uniform_messages_shape():
    cnf = Cnf(3, ((1, 2), (2, 3)))
    msgs = MessageSet.uniform(cnf)
    assert msgs.var_to_clause.shape == (2, 2)
    assert np.all(msgs.clause_to_var == 0.5)


def test_root_only_marginal_is_half():
    assert root_marginal_upward(root_only()) == 0.5
    assert correlated_root_marginals(root_only(correlated=True)) == (0.5, 0.5)


def test_t_one_projections_agree():
    tr = sample_correlated_tree(1.3, 1.0, 3, stream(2, "bp"))
    p1, p2 = correlated_root_marginals(tr)
    assert p1 == p2


def test_influence_zero_at_depth_zero():
    inf = boundary_influence(root_only(0))
    assert inf.value == 0.0 and not inf.truncated


def test_influence_of_single_clause():
    # root x, clause (x or y), y pinned: y true -> 1/2, y false -> x forced true
    tree = tree_from_key("(++())", 1)
    assert math.isclose(root_marginal_upward(tree), 2 / 3)
    inf = boundary_influence(tree)
    assert math.isclose(inf.value, 1 / 3)
    assert math.isclose(boundary_influence_bruteforce(tree), 1 / 3)


def test_influence_matches_bruteforce():
    rng = stream(3, "inf")
    checked = 0
    while checked < 40:
        tr = sample_plain_tree(1.6, 2, rng)
        if len(tr.boundary()) > 10:
            continue
        fast = boundary_influence(tr)
        assert not fast.truncated
        assert abs(fast.value - boundary_influence_bruteforce(tr)) < 1e-12
        checked += 1


def test_influence_sampling_fallback_is_lower_bound():
    rng = stream(4, "inf")
    for _ in range(30):
        tr = sample_plain_tree(1.6, 2, rng)
        if len(tr.boundary()) > 8:
            continue
        exact = boundary_influence(tr).value
        capped = boundary_influence(tr, stream(5, "fallback"), cap=1, samples=64)
        assert capped.truncated or tr.boundary() == []
        assert capped.value <= exact + 1e-12
    with pytest.raises(ValueError):
        boundary_influence(tree_from_key("(++()+-()--())", 1), rng=None, cap=1)


def test_weak_interactions_have_small_influence():
    rng = stream(6, "weak")
    vals = [boundary_influence(project(sample_correlated_tree(0.2, 0.5, 1, rng), 1)).value for _ in range(2000)]
    assert np.mean(vals) < 0.06


def test_tree_record_fields():
    rec = json.loads(tree_record(sample_correlated_tree(1.0, 0.5, 2, stream(7, "rec"))))
    assert set(rec) == {"p1", "p2", "influence", "depth"}
    assert 0 <= rec["p1"] <= 1 and rec["influence"] >= 0
