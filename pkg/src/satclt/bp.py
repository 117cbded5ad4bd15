"""Belief Propagation for 2-CNFs and exact root marginals of tree formulas.

Messages are stored per (clause index, position) as the probability of the
value +1 ("true"), for both directions:

* ``var_to_clause[i, j]``: message from the ``j``-th variable of clause ``i``;
* ``clause_to_var[i, j]``: message from clause ``i`` to its ``j``-th variable.

A clause ``a = (l_x or l_y)`` sends ``x`` the distribution giving value
``sign(x, a)`` weight ``1 / (1 + q)`` and the opposite value ``q / (1 + q)``,
where ``q`` is the probability that ``y``'s message satisfies ``a``.  A
variable sends a clause the normalised product of the messages from its
other clauses, or ``1/2`` when that product vanishes identically.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .counting import count_models
from .formula import Cnf
from .gw_tree import TreeFormula, project

DEFAULT_BOUNDARY_CAP = 2**20
DEFAULT_BOUNDARY_SAMPLES = 2**12


@dataclass(frozen=True, eq=False)
class MessageSet:
    var_to_clause: np.ndarray
    clause_to_var: np.ndarray

    @classmethod
    def uniform(cls, cnf: Cnf) -> "MessageSet":
        shape = (cnf.m, 2)
        return cls(np.full(shape, 0.5), np.full(shape, 0.5))


def _signs(cnf: Cnf) -> np.ndarray:
    if cnf.m == 0:
        return np.zeros((0, 2), dtype=np.int8)
    return np.sign(np.asarray(cnf.clauses, dtype=np.int64)).astype(np.int8)


def _incidence(cnf: Cnf) -> list[list[tuple[int, int]]]:
    inc: list[list[tuple[int, int]]] = [[] for _ in range(cnf.n + 1)]
    for i, (a, b) in enumerate(cnf.clauses):
        inc[abs(a)].append((i, 0))
        inc[abs(b)].append((i, 1))
    return inc


def _normalise(plus: float, minus: float) -> float:
    z = plus + minus
    return 0.5 if z == 0 else plus / z


def bp_step(cnf: Cnf, msgs: MessageSet) -> MessageSet:
    """One synchronous round of both message updates."""
    signs = _signs(cnf)
    vc = msgs.var_to_clause
    # probability that the other variable's message satisfies the clause
    q = np.where(signs[:, ::-1] > 0, vc[:, ::-1], 1.0 - vc[:, ::-1])
    toward_sign = 1.0 / (1.0 + q)
    cv = np.where(signs > 0, toward_sign, 1.0 - toward_sign)
    new_vc = np.empty_like(cv)
    for incident in _incidence(cnf):
        for i, j in incident:
            plus = 1.0
            minus = 1.0
            for k, p in incident:
                if (k, p) != (i, j):
                    plus *= cv[k, p]
                    minus *= 1.0 - cv[k, p]
            new_vc[i, j] = _normalise(plus, minus)
    return MessageSet(new_vc, cv)


def run_bp(cnf: Cnf, rounds: int, msgs: MessageSet | None = None) -> MessageSet:
    msgs = MessageSet.uniform(cnf) if msgs is None else msgs
    for _ in range(rounds):
        msgs = bp_step(cnf, msgs)
    return msgs


def bp_marginals(cnf: Cnf, msgs: MessageSet) -> dict[int, float]:
    """Per-variable probability of +1 from all incoming clause messages."""
    out = {}
    cv = msgs.clause_to_var
    for v, incident in enumerate(_incidence(cnf)):
        if v == 0:
            continue
        plus = 1.0
        minus = 1.0
        for i, j in incident:
            plus *= cv[i, j]
            minus *= 1.0 - cv[i, j]
        out[v] = _normalise(plus, minus)
    return out


def tree_root_marginal(tree: TreeFormula) -> float:
    """Root marginal by BP from uniform messages for ``2 * height`` rounds.

    Each round of ``bp_step`` updates both directions, so ``height`` rounds
    would already be exact; running ``2 * height`` keeps a margin.
    """
    cnf = tree.to_cnf()
    msgs = run_bp(cnf, 2 * tree.height)
    return bp_marginals(cnf, msgs)[1]


def _log_sigmoid(x: float) -> float:
    if x == math.inf:
        return 0.0
    if x == -math.inf:
        return -math.inf
    return -math.log1p(math.exp(-x)) if x > -30 else x - math.log1p(math.exp(x))


def sigmoid(h: float) -> float:
    if h >= 0:
        return 1.0 / (1.0 + math.exp(-h))
    e = math.exp(h)
    return e / (1.0 + e)


def _clause_field(h_child: float, s_parent: int, s_child: int) -> float:
    """Log-odds contribution of a clause to its parent variable."""
    ls = _log_sigmoid(s_child * h_child)
    if ls == -math.inf:
        return s_parent * math.inf
    return -s_parent * ls


def root_field(tree: TreeFormula) -> float:
    """Root log-odds ``log(P[+1] / P[-1])`` by one upward sweep.

    Equivalent to running BP to convergence on the tree: the message a
    variable sends upward only depends on its subtree.
    """
    h = [0.0] * tree.size
    parent = tree.parent.tolist()
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    for v in range(tree.size - 1, 0, -1):
        h[parent[v]] += _clause_field(h[v], sp[v], sc[v])
    return h[0]


def root_marginal_upward(tree: TreeFormula) -> float:
    return sigmoid(root_field(tree))


def correlated_root_marginals(tree: TreeFormula) -> tuple[float, float]:
    """Root marginals of the two projections of a correlated tree."""
    return root_marginal_upward(project(tree, 1)), root_marginal_upward(project(tree, 2))


def exact_root_marginal(tree: TreeFormula) -> float:
    """Root marginal by exact conditioned counting (independent route)."""
    cnf = tree.to_cnf()
    total = count_models(cnf).count
    return count_models(cnf, assume=(1,)).count / total


# -- boundary influence ---------------------------------------------------


@dataclass(frozen=True)
class Influence:
    value: float
    truncated: bool
    boundary_size: int
    patterns: int


def _key(h: float) -> float:
    return h if math.isinf(h) else round(h, 12)


def _achievable_fields(tree: TreeFormula, cap: int) -> list[float] | None:
    """Set of root log-odds reachable by pinning the boundary variables to
    the restriction of some satisfying assignment; ``None`` once more than
    ``cap`` combinations would have to be formed."""
    n = tree.size
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    depth = tree.depth.tolist()
    children = tree.children
    sets: list[list[float]] = [[] for _ in range(n)]
    for v in range(n - 1, -1, -1):
        if depth[v] == tree.ell:
            sets[v] = [math.inf, -math.inf]
            continue
        acc = {0.0: 0.0}
        for u in children[v]:
            contrib = {_key(_clause_field(hu, sp[u], sc[u])) for hu in sets[u]}
            if len(acc) * len(contrib) > cap:
                return None
            nxt = {}
            for a in acc:
                for b in contrib:
                    if math.isinf(a) and math.isinf(b) and a != b:
                        continue  # contradictory forcing: no satisfying extension
                    s = a + b
                    nxt[_key(s)] = s
            acc = nxt
        sets[v] = list(acc.values())
    return sets[0]


def _pinned_field(tree: TreeFormula, pins: dict[int, int]) -> float:
    """Root log-odds with the variables in ``pins`` fixed (nan if contradictory)."""
    h = [0.0] * tree.size
    parent = tree.parent.tolist()
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    for v in range(tree.size - 1, 0, -1):
        hv = pins[v] * math.inf if v in pins else h[v]
        h[parent[v]] += _clause_field(hv, sp[v], sc[v])
    return pins[0] * math.inf if 0 in pins else h[0]


def _sample_assignment(tree: TreeFormula, rng: np.random.Generator) -> list[int]:
    """Uniform satisfying assignment of a tree formula, top-down."""
    n = tree.size
    parent = tree.parent.tolist()
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    # upward fields of each subtree (messages toward the parent)
    h = [0.0] * n
    for v in range(n - 1, 0, -1):
        h[parent[v]] += _clause_field(h[v], sp[v], sc[v])
    sigma = [0] * n
    sigma[0] = 1 if rng.random() < sigmoid(h[0]) else -1
    for v in range(1, n):
        p = parent[v]
        if sigma[p] != sp[v]:
            # clause not satisfied by the parent: child is forced
            sigma[v] = sc[v]
        else:
            sigma[v] = 1 if rng.random() < sigmoid(h[v]) else -1
    return sigma


def boundary_influence(
    tree: TreeFormula,
    rng: np.random.Generator | None = None,
    cap: int = DEFAULT_BOUNDARY_CAP,
    samples: int = DEFAULT_BOUNDARY_SAMPLES,
) -> Influence:
    """Largest change of the root marginal caused by fixing the variables at
    distance ``2 * ell`` to a pattern extendable to a satisfying assignment.

    Exact while the propagated value sets stay under ``cap`` combinations;
    otherwise ``samples`` uniformly random satisfying assignments supply the
    boundary patterns and the result is a lower bound flagged ``truncated``.
    """
    bnd = tree.boundary()
    if not bnd or tree.ell == 0:
        return Influence(0.0, False, len(bnd) if tree.ell else 0, 1)
    base = root_marginal_upward(tree)
    fields = _achievable_fields(tree, cap)
    if fields is not None:
        value = max(abs(sigmoid(h) - base) for h in fields)
        return Influence(value, False, len(bnd), len(fields))
    if rng is None:
        raise ValueError("an rng is needed once the exact enumeration is capped")
    best = 0.0
    for _ in range(samples):
        sigma = _sample_assignment(tree, rng)
        h = _pinned_field(tree, {v: sigma[v] for v in bnd})
        best = max(best, abs(sigmoid(h) - base))
    return Influence(best, True, len(bnd), samples)


def boundary_influence_bruteforce(tree: TreeFormula) -> float:
    """Oracle: enumerate boundary patterns and count models exactly."""
    bnd = tree.boundary()
    if not bnd or tree.ell == 0:
        return 0.0
    cnf = tree.to_cnf()
    total = count_models(cnf).count
    base = count_models(cnf, assume=(1,)).count / total
    best = 0.0
    for pattern in itertools.product((1, -1), repeat=len(bnd)):
        lits = [s * (v + 1) for s, v in zip(pattern, bnd)]
        z = count_models(cnf, assume=lits).count
        if z == 0:
            continue
        z1 = count_models(cnf, assume=lits + [1]).count
        best = max(best, abs(z1 / z - base))
    return best


def tree_record(tree: TreeFormula, rng: np.random.Generator | None = None) -> str:
    """JSON line ``{"p1", "p2", "influence", "depth"}`` for a correlated tree;
    ``influence`` is that of the first projection."""
    p1, p2 = correlated_root_marginals(tree)
    inf = boundary_influence(project(tree, 1), rng)
    return json.dumps({"p1": p1, "p2": p2, "influence": inf.value, "depth": tree.height})
