"""2-CNF data model, random generation and incidence-graph neighbourhoods.

Literals are signed non-zero integers in DIMACS style: ``+i`` is the
variable ``x_i`` and ``-i`` its negation, with variables numbered ``1..n``.
A clause is a pair of literals over two distinct variables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

Clause = tuple[int, int]


class Literal(NamedTuple):
    """Structured view of a signed-integer literal."""

    var: int
    sign: int

    @classmethod
    def of(cls, lit: int) -> "Literal":
        return cls(abs(lit), 1 if lit > 0 else -1)

    def __int__(self) -> int:
        return self.sign * self.var


def lit_sign(lit: int) -> int:
    return 1 if lit > 0 else -1


def clause_key(clause: Clause) -> Clause:
    """Order-free representation of a clause (literals sorted by variable)."""
    a, b = clause
    return (a, b) if abs(a) < abs(b) else (b, a)


def _check_clause(clause: Clause, n: int) -> None:
    if len(clause) != 2:
        raise ValueError(f"clause {clause!r} must have exactly two literals")
    a, b = clause
    if a == 0 or b == 0:
        raise ValueError(f"clause {clause!r} contains the literal 0")
    if abs(a) == abs(b):
        raise ValueError(f"clause {clause!r} repeats variable {abs(a)}")
    if abs(a) > n or abs(b) > n:
        raise ValueError(f"clause {clause!r} references a variable above n={n}")


@dataclass(frozen=True)
class Cnf:
    """A 2-CNF on variables ``1..n``; duplicate clauses are allowed."""

    n: int
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be non-negative")
        clauses = tuple((int(a), int(b)) for a, b in self.clauses)
        for c in clauses:
            _check_clause(c, self.n)
        object.__setattr__(self, "clauses", clauses)

    @property
    def m(self) -> int:
        return len(self.clauses)

    def __len__(self) -> int:
        return len(self.clauses)

    @cached_property
    def var_clauses(self) -> list[list[int]]:
        """``var_clauses[v]`` lists the indices of clauses containing ``x_v``."""
        adj: list[list[int]] = [[] for _ in range(self.n + 1)]
        for i, (a, b) in enumerate(self.clauses):
            adj[abs(a)].append(i)
            adj[abs(b)].append(i)
        return adj

    @cached_property
    def implications(self) -> list[list[tuple[int, int]]]:
        """Implication lists indexed by ``lit + n``.

        Entry ``(i, k)`` in the list of ``l`` means clause ``i`` is
        ``not l or k``, i.e. ``l -> k``.
        """
        n = self.n
        out: list[list[tuple[int, int]]] = [[] for _ in range(2 * n + 1)]
        for i, (a, b) in enumerate(self.clauses):
            out[n - a].append((i, b))
            out[n - b].append((i, a))
        return out

    def degree(self, v: int) -> int:
        return len(self.var_clauses[v])

    def with_clauses(self, extra: Iterable[Clause]) -> "Cnf":
        return Cnf(self.n, self.clauses + tuple(extra))

    def subformula(self, indices: Iterable[int]) -> "Cnf":
        return Cnf(self.n, tuple(self.clauses[i] for i in indices))

    def multiset(self) -> tuple[Clause, ...]:
        """Sorted, orientation-free clause list; equal for formulas that
        differ only in clause order."""
        return tuple(sorted(clause_key(c) for c in self.clauses))


def _sample_clauses(n: int, m: int, rng: np.random.Generator) -> tuple[Clause, ...]:
    if m == 0:
        return ()
    x = rng.integers(1, n + 1, size=m)
    y = rng.integers(1, n, size=m)
    y = y + (y >= x)
    sx = 2 * rng.integers(0, 2, size=m) - 1
    sy = 2 * rng.integers(0, 2, size=m) - 1
    return tuple(zip((x * sx).tolist(), (y * sy).tolist()))


def sample_random_cnf(n: int, m: int, rng: np.random.Generator) -> Cnf:
    """Draw ``m`` clauses i.i.d. uniformly from the ``4 * C(n, 2)`` 2-clauses."""
    if n < 2:
        raise ValueError("random 2-CNFs need n >= 2")
    if m < 0:
        raise ValueError("m must be non-negative")
    return Cnf(n, _sample_clauses(n, m, rng))


def clause_count_for_density(n: int, d: float) -> int:
    """Number of clauses used for density ``d``: ``round(d * n / 2)``,
    halves rounded up.  All experiments use this convention."""
    if d <= 0:
        raise ValueError("density must be positive")
    exact = Decimal(repr(float(d))) * n / 2
    return int(exact.to_integral_value(rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class CorrelatedPair:
    """Two formulas sharing ``M`` clauses, each with ``M'`` private clauses.

    ``formula(1)`` is ``shared + private1`` and ``formula(2)`` is
    ``shared + private2``, in that clause order.
    """

    n: int
    shared: tuple[Clause, ...]
    private1: tuple[Clause, ...]
    private2: tuple[Clause, ...]

    def __post_init__(self) -> None:
        if len(self.private1) != len(self.private2):
            raise ValueError("private clause lists must have equal length")

    @property
    def M(self) -> int:
        return len(self.shared)

    @property
    def M_private(self) -> int:
        return len(self.private1)

    def private(self, h: int) -> tuple[Clause, ...]:
        if h == 1:
            return self.private1
        if h == 2:
            return self.private2
        raise ValueError("h must be 1 or 2")

    def formula(self, h: int) -> Cnf:
        return Cnf(self.n, self.shared + self.private(h))

    def prefix(self, M: int, M_private: int) -> "CorrelatedPair":
        """The pair built from the first ``M`` shared and first
        ``M_private`` private clauses."""
        if M > self.M or M_private > self.M_private or min(M, M_private) < 0:
            raise ValueError("prefix lengths exceed the stored sequences")
        return CorrelatedPair(
            self.n, self.shared[:M], self.private1[:M_private], self.private2[:M_private]
        )


def sample_correlated_pair(n: int, M: int, M_private: int, rng: np.random.Generator) -> CorrelatedPair:
    if n < 2:
        raise ValueError("random 2-CNFs need n >= 2")
    if M < 0 or M_private < 0:
        raise ValueError("clause counts must be non-negative")
    shared = _sample_clauses(n, M, rng)
    p1 = _sample_clauses(n, M_private, rng)
    p2 = _sample_clauses(n, M_private, rng)
    return CorrelatedPair(n, shared, p1, p2)


@dataclass(frozen=True)
class SubFormula:
    """Depth-``radius`` neighbourhood of ``center`` in the incidence graph."""

    base: Cnf
    center: int
    radius: int
    variables: frozenset[int]
    clause_indices: tuple[int, ...]
    boundary: frozenset[int]
    distance: dict[int, int] = field(compare=False, repr=False)

    @property
    def cnf(self) -> Cnf:
        return self.base.subformula(self.clause_indices)

    def is_tree(self) -> bool:
        # connected by construction, so acyclic iff |F| = |V| - 1
        return len(self.clause_indices) == len(self.variables) - 1


def neighborhood(cnf: Cnf, x: int, radius: int) -> SubFormula:
    """Breadth-first truncation of the incidence graph around ``x``.

    Keeps every variable at distance ``<= radius`` and every clause at
    distance ``<= radius - 1``; ``boundary`` holds the variables at distance
    exactly ``radius``.
    """
    if not 1 <= x <= cnf.n:
        raise ValueError(f"variable {x} outside 1..{cnf.n}")
    if radius < 0 or radius % 2:
        raise ValueError("radius must be a non-negative even integer")
    dist = {x: 0}
    kept: list[int] = []
    seen: set[int] = set()
    frontier = [x]
    var_clauses = cnf.var_clauses
    clauses = cnf.clauses
    for depth in range(0, radius, 2):
        nxt = []
        for v in frontier:
            for ci in var_clauses[v]:
                if ci in seen:
                    continue
                seen.add(ci)
                kept.append(ci)
                for lit in clauses[ci]:
                    w = abs(lit)
                    if w not in dist:
                        dist[w] = depth + 2
                        nxt.append(w)
        frontier = nxt
    boundary = frozenset(v for v, dv in dist.items() if dv == radius)
    return SubFormula(cnf, x, radius, frozenset(dist), tuple(sorted(kept)), boundary, dist)


def expected_count(n: int, m: int) -> float:
    """First moment ``E[Z] = 2**n * (3/4)**m`` of the random 2-CNF."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return float(Fraction(2**n * 3**m, 4**m))


def log_expected_count(n: int, m: int) -> float:
    return n * math.log(2) + m * math.log(0.75)


def all_clauses(n: int) -> list[Clause]:
    """Every 2-clause on ``n`` variables, in a fixed order."""
    out = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for si in (1, -1):
                for sj in (1, -1):
                    out.append((si * i, sj * j))
    return out


def cnf_from_lists(n: int, clauses: Sequence[Sequence[int]]) -> Cnf:
    return Cnf(n, tuple((int(c[0]), int(c[1])) for c in clauses))
