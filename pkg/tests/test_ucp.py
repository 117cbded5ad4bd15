from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_prune, naive_sat, naive_ucp
from satclt.counting import count_models, is_satisfiable
from satclt.formula import Cnf, sample_random_cnf
from satclt.rng import stream
from satclt.ucp import (
    clause_sensitivity_set,
    closure,
    format_closures,
    literals_reaching,
    prune,
    run_ucp,
)

formulas = st.builds(
    lambda n, m, seed: sample_random_cnf(n, m, stream(seed, "ucp")),
    st.integers(2, 12),
    st.integers(0, 30),
    st.integers(0, 2**32),
)


def test_chain_closure():
    cnf = Cnf(4, ((-1, 2), (-2, 3), (-3, 4)))
    assert closure(cnf, [1]) == {1, 2, 3, 4}
    assert closure(cnf, [-4]) == {-4, -3, -2, -1}
    assert closure(cnf, [2]) == {2, 3, 4}


def test_failed_literal_and_conflicts():
    # x1 -> x2 and x1 -> -x2: propagation from x1 reaches both x2 and -x2,
    # then -x1 by contraposition
    cnf = Cnf(3, ((-1, 2), (-1, -2), (2, 3)))
    out = run_ucp(cnf, [1])
    assert out.closure == {1, 2, -2, -1, 3}
    assert out.sigma == {1: 0, 2: 0, 3: 1}
    assert out.conflicted == {1, 2}
    assert out.conflicts == {0, 1}
    hat = prune(cnf)
    assert hat.removed == {0, 1}
    assert hat.cnf.clauses == ((2, 3),)
    assert hat.conflicted_literals == 1


def test_pruning_of_all_four_clauses():
    cnf = Cnf(2, ((1, 2), (1, -2), (-1, 2), (-1, -2)))
    assert not is_satisfiable(cnf)
    assert prune(cnf).cnf.m == 0


@given(formulas, st.data())
@settings(max_examples=80, deadline=None)
def test_ucp_matches_literal_transcription(cnf, data):
    lits = data.draw(st.lists(st.sampled_from([v * s for v in range(1, cnf.n + 1) for s in (1, -1)]), max_size=3))
    ref_l, ref_sigma, ref_c = naive_ucp(cnf.clauses, lits)
    out = run_ucp(cnf, lits)
    assert out.closure == ref_l
    assert out.sigma == ref_sigma
    assert out.conflicts == ref_c


@given(formulas)
@settings(max_examples=150, deadline=None)
def test_prune_matches_transcription_and_is_satisfiable(cnf):
    hat = prune(cnf)
    assert set(hat.removed) == naive_prune(cnf)
    assert naive_sat(hat.cnf)


@given(formulas)
@settings(max_examples=60, deadline=None)
def test_pruning_never_loses_models(cnf):
    assert count_models(prune(cnf).cnf).count >= count_models(cnf).count


def test_pruning_keeps_satisfiable_tree_intact():
    cnf = Cnf(4, ((1, 2), (-2, 3), (3, -4)))
    assert prune(cnf).removed == frozenset()


def test_literals_reaching_uses_contraposition():
    cnf = Cnf(4, ((-1, 2), (-2, 3), (-4, -3)))
    # 1 -> 2 -> 3 -> -4 and 4 -> -3 -> -2 -> -1
    reach = literals_reaching(cnf, 3)
    brute = {
        l
        for v in range(1, 5)
        for l in (v, -v)
        if 3 in closure(cnf, [l]) or -3 in closure(cnf, [l])
    }
    assert reach == brute


def test_sensitivity_set_bad_clause():
    with pytest.raises(ValueError):
        clause_sensitivity_set(Cnf(2, ()), (1, 3))


def test_format_closures_golden():
    cnf = Cnf(3, ((-1, 2), (-2, 3)))
    assert format_closures(cnf) == (
        "1: 1 2 3\n"
        "-1: -1\n"
        "2: 2 3\n"
        "-2: -1 -2\n"
        "3: 3\n"
        "-3: -1 -2 -3\n"
    )


def test_closure_rejects_bad_literal():
    with pytest.raises(ValueError):
        closure(Cnf(2, ()), [3])
