"""Exact satisfiability and model counting for 2-CNFs.

``count_models`` is a DPLL counter over a slightly richer object than a
clause list: every variable carries integer weights ``(w_true, w_false)``
and every pair of adjacent variables a 2x2 integer compatibility matrix
(the entrywise product of the clauses between them).  Forcing a literal
zeroes one weight.  Before and after each branch the problem is reduced:

* a forced variable is conditioned out (unit propagation);
* a variable of degree 0 or 1 is summed out (solves trees outright);
* a variable of degree 2 is summed out into a matrix between its two
  neighbours (series reduction), merging parallel edges.

What remains has minimum degree 3.  It is split into connected components,
each looked up in a cache and otherwise branched on its highest-degree
variable (ties: lowest index).  All arithmetic is on Python integers, so
counts are exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .formula import Clause, Cnf

LOG2 = math.log(2.0)
DEFAULT_NODE_BUDGET = 5_000_000
BRUTEFORCE_MAX_N = 25

class CountBudgetExceeded(RuntimeError):
    """The DPLL search visited more branch nodes than allowed."""

    def __init__(self, nodes: int, budget: int, components_done: int, components_total: int):
        self.nodes = nodes
        self.budget = budget
        self.components_done = components_done
        self.components_total = components_total
        super().__init__(
            f"node budget {budget} exceeded after {nodes} nodes "
            f"({components_done}/{components_total} top-level components counted)"
        )


class UndefinedDistribution(ValueError):
    """Marginals were requested for an unsatisfiable formula."""


def log_int(x: int) -> float:
    """Natural log of a non-negative integer of any size (``-inf`` for 0)."""
    if x < 0:
        raise ValueError("log of a negative count")
    if x == 0:
        return -math.inf
    shift = x.bit_length() - 64
    if shift <= 0:
        return math.log(x)
    return math.log(x >> shift) + shift * LOG2


@dataclass(frozen=True)
class ModelCount:
    count: int
    log_value: float
    nodes: int = 0

    @classmethod
    def of(cls, count: int, nodes: int = 0) -> "ModelCount":
        return cls(count, log_int(count), nodes)

    @property
    def sat(self) -> bool:
        return self.count > 0


@dataclass(frozen=True)
class Marginal:
    p_true: float
    true_count: int
    total: int

    @property
    def exact(self) -> Fraction:
        return Fraction(self.true_count, self.total)


# -- satisfiability -----------------------------------------------------


def implication_sccs(cnf: Cnf) -> list[int]:
    """Tarjan SCC labels of the implication graph, indexed by ``lit + n``."""
    n = cnf.n
    imp = cnf.implications
    size = 2 * n + 1
    index = [-1] * size
    low = [0] * size
    on_stack = [False] * size
    comp = [-1] * size
    stack: list[int] = []
    counter = 0
    ncomp = 0
    for root in range(size):
        if root == n or index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            node, pos = work[-1]
            succ = imp[node]
            if pos < len(succ):
                work[-1] = (node, pos + 1)
                nxt = succ[pos][1] + n
                if index[nxt] == -1:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack[nxt] = True
                    work.append((nxt, 0))
                elif on_stack[nxt] and index[nxt] < low[node]:
                    low[node] = index[nxt]
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[node] < low[parent]:
                    low[parent] = low[node]
            if low[node] == index[node]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = ncomp
                    if w == node:
                        break
                ncomp += 1
    return comp


def is_satisfiable(cnf: Cnf) -> bool:
    """True iff no variable shares an implication-graph SCC with its negation."""
    n = cnf.n
    comp = implication_sccs(cnf)
    return all(comp[n + v] != comp[n - v] for v in range(1, n + 1))


# -- exact counting -----------------------------------------------------
#
# A residual problem is a graph: ``w[v] = (weight if true, weight if false)``
# and ``adj[u][v]`` a 2x2 integer matrix ``(M_tt, M_tf, M_ft, M_ff)`` indexed
# by (value of u, value of v); ``adj[v][u]`` holds the transpose.  A clause
# is the 0/1 matrix with a single 0 where both literals are false, and
# parallel clauses multiply entrywise.

Matrix = tuple[int, int, int, int]


def _transpose(M: Matrix) -> Matrix:
    return (M[0], M[2], M[1], M[3])


def _clause_matrix(a: int, b: int) -> tuple[int, int, Matrix]:
    u, v = abs(a), abs(b)
    entries = [1, 1, 1, 1]
    # value index 0 = true, 1 = false; the literal a is false at index 1 if a>0
    entries[2 * (1 if a > 0 else 0) + (1 if b > 0 else 0)] = 0
    return u, v, tuple(entries)


def _reduce(w: dict[int, tuple[int, int]], adj: dict[int, dict[int, Matrix]], queue: list[int]) -> int:
    """Apply conditioning, leaf and series eliminations until none applies.

    Mutates ``w`` and ``adj``; returns the multiplicative factor of the
    eliminated variables (0 means the residual problem has no solutions).
    """
    factor = 1
    while queue:
        y = queue.pop()
        wy = w.get(y)
        if wy is None:
            continue
        nb = adj[y]
        if wy[0] == 0 or wy[1] == 0:
            if wy[0] == wy[1]:
                return 0
            # unit propagation: y is forced
            a = 0 if wy[1] == 0 else 1
            factor *= wy[a]
            for u, M in nb.items():
                wu = w[u]
                w[u] = (wu[0] * M[2 * a], wu[1] * M[2 * a + 1])
                del adj[u][y]
                queue.append(u)
            del w[y], adj[y]
            continue
        k = len(nb)
        if k == 0:
            factor *= wy[0] + wy[1]
            del w[y], adj[y]
        elif k == 1:
            (u, M), = nb.items()
            wu = w[u]
            w[u] = (wu[0] * (wy[0] * M[0] + wy[1] * M[2]), wu[1] * (wy[0] * M[1] + wy[1] * M[3]))
            del adj[u][y], w[y], adj[y]
            queue.append(u)
        elif k == 2:
            (u, A), (v, B) = nb.items()
            N = tuple(
                wy[0] * A[b] * B[c] + wy[1] * A[2 + b] * B[2 + c] for b in (0, 1) for c in (0, 1)
            )
            del adj[u][y], adj[v][y], w[y], adj[y]
            old = adj[u].get(v)
            if old is not None:
                N = tuple(p * q for p, q in zip(N, old))
            adj[u][v] = N
            adj[v][u] = _transpose(N)
            queue.append(u)
            queue.append(v)
    return factor


def _split(w: dict[int, tuple[int, int]], adj: dict[int, dict[int, Matrix]]) -> list[list[int]]:
    seen: set[int] = set()
    comps = []
    for s in sorted(w):
        if s in seen:
            continue
        seen.add(s)
        comp = [s]
        stack = [s]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    stack.append(v)
        comps.append(comp)
    return comps


class _Counter:
    def __init__(self, budget: int):
        self.budget = budget
        self.nodes = 0
        self.cache: dict[tuple, int] = {}

    def product(self, w: dict[int, tuple[int, int]], adj: dict[int, dict[int, Matrix]]) -> int:
        result = 1
        for comp in _split(w, adj):
            result *= self.component({v: w[v] for v in comp}, {v: adj[v] for v in comp})
            if result == 0:
                return 0
        return result

    def component(self, w: dict[int, tuple[int, int]], adj: dict[int, dict[int, Matrix]]) -> int:
        """Count a reduced connected component (all degrees >= 3)."""
        key = (
            tuple(sorted(w.items())),
            tuple(sorted((u, v, M) for u, nb in adj.items() for v, M in nb.items() if u < v)),
        )
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        y = max(adj, key=lambda u: (len(adj[u]), -u))
        total = 0
        for a in (0, 1):
            self.nodes += 1
            if self.nodes > self.budget:
                raise CountBudgetExceeded(self.nodes, self.budget, 0, 0)
            coef = w[y][a]
            if coef == 0:
                continue
            w2 = dict(w)
            adj2 = {u: dict(nb) for u, nb in adj.items()}
            queue = []
            for u, M in adj2.pop(y).items():
                wu = w2[u]
                w2[u] = (wu[0] * M[2 * a], wu[1] * M[2 * a + 1])
                del adj2[u][y]
                queue.append(u)
            del w2[y]
            coef *= _reduce(w2, adj2, queue)
            if coef:
                coef *= self.product(w2, adj2)
            total += coef
        self.cache[key] = total
        return total


def _initial_weights(n: int, assume: Iterable[int]) -> dict[int, tuple[int, int]]:
    w = {v: (1, 1) for v in range(1, n + 1)}
    for lit in assume:
        v = abs(lit)
        if not 1 <= v <= n:
            raise ValueError(f"assumed literal {lit} outside 1..{n}")
        wt, wf = w[v]
        w[v] = (wt, 0) if lit > 0 else (0, wf)
    return w


def count_models(cnf: Cnf, assume: Iterable[int] = (), budget: int = DEFAULT_NODE_BUDGET) -> ModelCount:
    """Exact number of satisfying assignments, optionally with literals
    ``assume`` forced true.

    Raises ``CountBudgetExceeded`` once more than ``budget`` branch nodes
    have been visited.
    """
    w = _initial_weights(cnf.n, assume)
    adj: dict[int, dict[int, Matrix]] = {v: {} for v in w}
    for a, b in cnf.clauses:
        u, v, M = _clause_matrix(a, b)
        old = adj[u].get(v)
        if old is not None:
            M = tuple(p * q for p, q in zip(M, old))
        adj[u][v] = M
        adj[v][u] = _transpose(M)
    factor = _reduce(w, adj, sorted(w, reverse=True))
    counter = _Counter(budget)
    if factor == 0:
        return ModelCount.of(0, 0)
    comps = _split(w, adj)
    for i, comp in enumerate(comps):
        try:
            factor *= counter.component({v: w[v] for v in comp}, {v: adj[v] for v in comp})
        except CountBudgetExceeded as exc:
            raise CountBudgetExceeded(exc.nodes, budget, i, len(comps)) from None
        if factor == 0:
            break
    return ModelCount.of(factor, counter.nodes)


def count_models_bruteforce(cnf: Cnf, assume: Iterable[int] = ()) -> ModelCount:
    """Reference count by enumerating all ``2**n`` assignments."""
    n = cnf.n
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTEFORCE_MAX_N}")
    lits = [(a, b) for a, b in cnf.clauses] + [(l, l) for l in assume]
    total = 0
    chunk = 1 << min(n, 20)
    for start in range(0, 1 << n, chunk):
        x = np.arange(start, start + chunk, dtype=np.int64)
        ok = np.ones(chunk, dtype=bool)
        for a, b in lits:
            ta = ((x >> (abs(a) - 1)) & 1) == (1 if a > 0 else 0)
            tb = ((x >> (abs(b) - 1)) & 1) == (1 if b > 0 else 0)
            ok &= ta | tb
        total += int(ok.sum())
    return ModelCount.of(total)


def marginal(cnf: Cnf, x: int, budget: int = DEFAULT_NODE_BUDGET) -> Marginal:
    """Probability that ``x`` is true under a uniform satisfying assignment."""
    total = count_models(cnf, budget=budget).count
    if total == 0:
        raise UndefinedDistribution("formula is unsatisfiable")
    true_count = count_models(cnf, assume=(x,), budget=budget).count
    return Marginal(true_count / total, true_count, total)


def survival_probability_exact(cnf: Cnf, e: Clause, budget: int = DEFAULT_NODE_BUDGET) -> Fraction:
    total = count_models(cnf, budget=budget).count
    if total == 0:
        raise UndefinedDistribution("formula is unsatisfiable")
    a, b = e
    violating = count_models(cnf, assume=(-a, -b), budget=budget).count
    return 1 - Fraction(violating, total)


def survival_probability(cnf: Cnf, e: Clause, budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Probability that a uniform satisfying assignment also satisfies ``e``."""
    return float(survival_probability_exact(cnf, e, budget))
