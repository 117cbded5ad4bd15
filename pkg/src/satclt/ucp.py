"""Pessimistic unit clause propagation and formula pruning.

UCP from a literal set ``L0`` returns the implication closure of ``L0``,
a partial assignment in ``{-1, 0, +1}`` (0 marks variables whose two
literals were both reached) and the conflict clauses, i.e. the clauses
whose variables are all set to 0.  Pruning deletes every conflict clause
found by UCP launched from each of the ``2n`` single literals; the result
is always satisfiable.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .formula import Clause, Cnf


@dataclass(frozen=True)
class UcpOutcome:
    closure: frozenset[int]
    sigma: dict[int, int]
    conflicts: frozenset[int]

    @property
    def variables(self) -> frozenset[int]:
        return frozenset(self.sigma)

    @property
    def conflicted(self) -> frozenset[int]:
        return frozenset(v for v, s in self.sigma.items() if s == 0)


def closure(cnf: Cnf, initial: Iterable[int]) -> set[int]:
    """Literals implication-reachable from ``initial`` (BFS)."""
    n = cnf.n
    imp = cnf.implications
    seen = set()
    queue = deque()
    for lit in initial:
        if lit == 0 or abs(lit) > n:
            raise ValueError(f"literal {lit} outside the formula's variables")
        if lit not in seen:
            seen.add(lit)
            queue.append(lit)
    while queue:
        lit = queue.popleft()
        for _, k in imp[lit + n]:
            if k not in seen:
                seen.add(k)
                queue.append(k)
    return seen


def _outcome(cnf: Cnf, lits: set[int]) -> UcpOutcome:
    sigma: dict[int, int] = {}
    zero = []
    for lit in lits:
        v = abs(lit)
        if v in sigma:
            continue
        if -lit in lits:
            sigma[v] = 0
            zero.append(v)
        else:
            sigma[v] = 1 if lit > 0 else -1
    conflicts = set()
    if zero:
        clauses = cnf.clauses
        for v in zero:
            for ci in cnf.var_clauses[v]:
                a, b = clauses[ci]
                if sigma.get(abs(a), 1) == 0 and sigma.get(abs(b), 1) == 0:
                    conflicts.add(ci)
    return UcpOutcome(frozenset(lits), sigma, frozenset(conflicts))


def run_ucp(cnf: Cnf, initial: Iterable[int]) -> UcpOutcome:
    return _outcome(cnf, closure(cnf, initial))


def reachable_literals(cnf: Cnf, lit: int) -> frozenset[int]:
    return frozenset(closure(cnf, (lit,)))


def all_closures(cnf: Cnf) -> dict[int, frozenset[int]]:
    """Closure of every single literal ``+-v``, keyed by the literal."""
    out = {}
    for v in range(1, cnf.n + 1):
        out[v] = frozenset(closure(cnf, (v,)))
        out[-v] = frozenset(closure(cnf, (-v,)))
    return out


@dataclass(frozen=True)
class PrunedCnf:
    base: Cnf
    kept: tuple[int, ...]
    removed: frozenset[int]
    # literal -> (number of conflict clauses, |V(Phi, {l})|), only for
    # literals whose UCP run produced at least one conflict
    conflict_stats: dict[int, tuple[int, int]]

    @property
    def cnf(self) -> Cnf:
        return self.base.subformula(self.kept)

    @property
    def conflicted_literals(self) -> int:
        return len(self.conflict_stats)


def prune(cnf: Cnf) -> PrunedCnf:
    removed: set[int] = set()
    stats: dict[int, tuple[int, int]] = {}
    for v in range(1, cnf.n + 1):
        for lit in (v, -v):
            lits = closure(cnf, (lit,))
            if -lit not in lits:
                # a conflict needs some x, -x in L, and x -> ... -> -lit
                # then follows by contraposition
                continue
            out = _outcome(cnf, lits)
            if out.conflicts:
                removed |= out.conflicts
                stats[lit] = (len(out.conflicts), len(out.sigma))
    kept = tuple(i for i in range(cnf.m) if i not in removed)
    return PrunedCnf(cnf, kept, frozenset(removed), stats)


def pruned(cnf: Cnf) -> Cnf:
    return prune(cnf).cnf


def literals_reaching(cnf: Cnf, v: int) -> frozenset[int]:
    """N(Phi, v): literals whose closure contains ``v`` or ``-v``.

    Uses contraposition: ``l`` reaches ``k`` iff ``-k`` reaches ``-l``.
    """
    back = closure(cnf, (v,)) | closure(cnf, (-v,))
    return frozenset(-k for k in back)


def clause_sensitivity_set(cnf: Cnf, e: Clause) -> frozenset[int]:
    """All literals UCP reaches from a literal that reaches either variable
    of ``e``.  Adding ``e`` to ``cnf`` changes ``log Z`` of the pruned
    formula by at most ``len(result) * log 2``."""
    a, b = e
    for lit in (a, b):
        if lit == 0 or abs(lit) > cnf.n:
            raise ValueError(f"clause {e} references a variable outside the formula")
    starts = literals_reaching(cnf, abs(a)) | literals_reaching(cnf, abs(b))
    return frozenset(closure(cnf, starts))


def format_closures(cnf: Cnf) -> str:
    """Debug dump: one ``lit: l1 l2 ...`` line per literal, sorted."""
    lines = []
    for v in range(1, cnf.n + 1):
        for lit in (v, -v):
            reach = sorted(closure(cnf, (lit,)), key=lambda k: (abs(k), -k))
            lines.append(f"{lit}: " + " ".join(str(k) for k in reach))
    return "\n".join(lines) + "\n"
