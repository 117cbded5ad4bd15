"""Galton-Watson tree formulas, plain and correlated.

A tree is stored as flat arrays over its variable nodes in breadth-first
order (a parent always precedes its children).  Every non-root variable
node ``v`` hangs below exactly one clause node, so clause nodes are
identified with their child variable: ``sign_parent[v]`` and
``sign_child[v]`` are the signs of the parent and child variable in that
clause.  ``depth`` counts clause generations, so a variable at depth ``k``
sits at incidence-graph distance ``2k`` from the root.

Classes: 0 is "shared" (or simply "plain" for uncorrelated trees), 1 and 2
are the 1- and 2-distinct classes.  A clause node has the class of its
child variable.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator

import numpy as np

from .formula import Cnf, CorrelatedPair
from .ucp import PrunedCnf, prune

SIGN_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))
CLASS_CHARS = ("S", "1", "2")
DEFAULT_SIZE_CAP = 1_000_000


class TreeSizeExceeded(RuntimeError):
    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"tree grew to {size} variable nodes, above the cap of {cap}")


@dataclass(frozen=True, eq=False)
class TreeFormula:
    parent: np.ndarray
    sign_parent: np.ndarray
    sign_child: np.ndarray
    depth: np.ndarray
    klass: np.ndarray
    ell: int
    correlated: bool = False

    @property
    def size(self) -> int:
        return len(self.parent)

    @property
    def n_clauses(self) -> int:
        return len(self.parent) - 1

    @property
    def height(self) -> int:
        return int(self.depth.max()) if self.size else 0

    @cached_property
    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.size)]
        for v, p in enumerate(self.parent.tolist()):
            if p >= 0:
                out[p].append(v)
        return out

    def boundary(self) -> list[int]:
        """Variable nodes at distance exactly ``2 * ell`` from the root."""
        return [v for v, k in enumerate(self.depth.tolist()) if k == self.ell]

    def clause(self, v: int) -> tuple[int, int]:
        """The clause above node ``v`` with node ``i`` numbered ``i + 1``."""
        p = int(self.parent[v])
        return (int(self.sign_parent[v]) * (p + 1), int(self.sign_child[v]) * (v + 1))

    def to_cnf(self) -> Cnf:
        """The tree as a 2-CNF; node ``i`` becomes variable ``i + 1`` and
        clause ``j`` is the clause above node ``j + 1``."""
        return Cnf(self.size, tuple(self.clause(v) for v in range(1, self.size)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TreeFormula):
            return NotImplemented
        return (
            self.ell == other.ell
            and self.correlated == other.correlated
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("parent", "sign_parent", "sign_child", "depth", "klass")
            )
        )

    __hash__ = None  # type: ignore[assignment]


def _from_lists(parent, sp, sc, depth, klass, ell: int, correlated: bool) -> TreeFormula:
    return TreeFormula(
        np.asarray(parent, dtype=np.int64),
        np.asarray(sp, dtype=np.int8),
        np.asarray(sc, dtype=np.int8),
        np.asarray(depth, dtype=np.int64),
        np.asarray(klass, dtype=np.int8),
        ell,
        correlated,
    )


def root_only(ell: int = 0, correlated: bool = False) -> TreeFormula:
    return _from_lists([-1], [0], [0], [0], [0], ell, correlated)


def correlated_rates(d: float, t: float) -> np.ndarray:
    """Offspring means, row = parent class, column = 4 * child class + sign type."""
    rates = np.zeros((3, 12))
    rates[0, 0:4] = d * t / 4
    rates[0, 4:12] = d * (1 - t) / 4
    rates[1, 4:8] = d / 4
    rates[2, 8:12] = d / 4
    return rates


def _grow(rates: np.ndarray, ell: int, rng: np.random.Generator, cap: int, correlated: bool) -> TreeFormula:
    ncol = rates.shape[1]
    sp_col = np.array([SIGN_PAIRS[c % 4][0] for c in range(ncol)], dtype=np.int8)
    sc_col = np.array([SIGN_PAIRS[c % 4][1] for c in range(ncol)], dtype=np.int8)
    cls_col = np.arange(ncol) // 4
    parent = [np.array([-1])]
    sp = [np.array([0], dtype=np.int8)]
    sc = [np.array([0], dtype=np.int8)]
    depth = [np.array([0])]
    klass = [np.array([0], dtype=np.int8)]
    frontier = np.array([0])
    frontier_cls = np.array([0])
    size = 1
    for k in range(1, ell + 1):
        counts = rng.poisson(rates[frontier_cls]).ravel()
        total = int(counts.sum())
        if total == 0:
            break
        if size + total > cap:
            raise TreeSizeExceeded(size + total, cap)
        cols = np.repeat(np.tile(np.arange(ncol), len(frontier)), counts)
        parent.append(np.repeat(np.repeat(frontier, ncol), counts))
        sp.append(sp_col[cols])
        sc.append(sc_col[cols])
        depth.append(np.full(total, k))
        child_cls = cls_col[cols]
        klass.append(child_cls.astype(np.int8))
        frontier = np.arange(size, size + total)
        frontier_cls = child_cls
        size += total
    return TreeFormula(
        np.concatenate(parent).astype(np.int64),
        np.concatenate(sp).astype(np.int8),
        np.concatenate(sc).astype(np.int8),
        np.concatenate(depth).astype(np.int64),
        np.concatenate(klass).astype(np.int8),
        ell,
        correlated,
    )


def sample_plain_tree(d: float, ell: int, rng: np.random.Generator, cap: int = DEFAULT_SIZE_CAP) -> TreeFormula:
    """Depth-``2 * ell`` truncation of the plain tree: every variable spawns
    Po(d/4) clauses of each sign type, every clause one variable."""
    if d <= 0:
        raise ValueError("d must be positive")
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return _grow(np.full((1, 4), d / 4), ell, rng, cap, correlated=False)


def sample_correlated_tree(
    d: float, t: float, ell: int, rng: np.random.Generator, cap: int = DEFAULT_SIZE_CAP
) -> TreeFormula:
    """Depth-``2 * ell`` truncation of the correlated three-class tree."""
    if d <= 0:
        raise ValueError("d must be positive")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    if ell < 0:
        raise ValueError("ell must be non-negative")
    return _grow(correlated_rates(d, t), ell, rng, cap, correlated=True)


def project(tree: TreeFormula, h: int) -> TreeFormula:
    """Delete the ``(3 - h)``-distinct nodes; the result is a plain tree."""
    if h not in (1, 2):
        raise ValueError("h must be 1 or 2")
    if not tree.correlated:
        raise ValueError("projection needs a correlated tree")
    keep = tree.klass != (3 - h)
    # (3-h)-distinct nodes only have (3-h)-distinct descendants, so whole
    # subtrees disappear and the kept nodes stay in breadth-first order
    new_index = np.cumsum(keep) - 1
    parent = tree.parent[keep]
    parent = np.where(parent >= 0, new_index[np.maximum(parent, 0)], -1)
    return TreeFormula(
        parent.astype(np.int64),
        tree.sign_parent[keep].copy(),
        tree.sign_child[keep].copy(),
        tree.depth[keep].copy(),
        np.zeros(int(keep.sum()), dtype=np.int8),
        tree.ell,
        False,
    )


# -- canonical keys -----------------------------------------------------


def _sign_char(s: int) -> str:
    return "+" if s > 0 else "-"


def _node_keys(tree: TreeFormula) -> list[str]:
    """Canonical key of the subtree below every node."""
    n = tree.size
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    cls = tree.klass.tolist()
    parent = tree.parent.tolist()
    child_keys: list[list[str]] = [[] for _ in range(n)]
    keys = [""] * n
    for v in range(n - 1, -1, -1):
        tag = CLASS_CHARS[cls[v]] if tree.correlated else ""
        keys[v] = "(" + tag + "".join(sorted(child_keys[v])) + ")"
        p = parent[v]
        if p >= 0:
            child_keys[p].append(_sign_char(sp[v]) + _sign_char(sc[v]) + keys[v])
    return keys


def canonical_key(tree: TreeFormula) -> str:
    """Key equal for two trees iff they are isomorphic by a root-, sign- and
    class-preserving isomorphism.

    Grammar: ``node := "(" [class] {edge node} ")"`` with children sorted,
    ``edge`` the two sign characters (parent, child) and ``class`` one of
    ``S 1 2`` for correlated trees.
    """
    return _node_keys(tree)[0]


def tree_from_key(key: str, ell: int | None = None) -> TreeFormula:
    """Inverse of ``canonical_key`` (up to sibling order)."""
    correlated = len(key) > 1 and key[1] in CLASS_CHARS
    parent: list[int] = []
    sp: list[int] = []
    sc: list[int] = []
    depth: list[int] = []
    klass: list[int] = []
    pos = 0

    def node(par: int, s1: int, s2: int, k: int) -> tuple[int, list]:
        nonlocal pos
        if key[pos] != "(":
            raise ValueError(f"malformed tree key at offset {pos}")
        pos += 1
        c = 0
        if correlated:
            c = CLASS_CHARS.index(key[pos])
            pos += 1
        me = len(parent)
        parent.append(par)
        sp.append(s1)
        sc.append(s2)
        depth.append(k)
        klass.append(c)
        pending = []
        while key[pos] != ")":
            a, b = key[pos], key[pos + 1]
            if a not in "+-" or b not in "+-":
                raise ValueError(f"malformed tree key at offset {pos}")
            pos += 2
            start = pos
            level = 0
            while True:
                if key[pos] == "(":
                    level += 1
                elif key[pos] == ")":
                    level -= 1
                pos += 1
                if level == 0:
                    break
            pending.append((1 if a == "+" else -1, 1 if b == "+" else -1, start))
        pos += 1
        return me, pending

    # breadth-first so that parents precede children
    queue = [(-1, 0, 0, 0)]
    head = 0
    while head < len(queue):
        par, s1, s2, start = queue[head]
        head += 1
        pos = start
        k = depth[par] + 1 if par >= 0 else 0
        me, pending = node(par, s1, s2, k)
        for a, b, st in pending:
            queue.append((me, a, b, st))
    height = max(depth)
    return _from_lists(parent, sp, sc, depth, klass, height if ell is None else ell, correlated)


# -- probabilities ------------------------------------------------------


def _log_poisson(k: int, lam: float) -> float:
    if lam == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def tree_log_probability(tree: TreeFormula, d: float, t: float | None = None) -> float:
    """Closed-form log probability that the depth-``2 * ell`` truncation of the
    (plain or, with ``t`` given, correlated) tree is isomorphic to ``tree``.

    For a node above the truncation depth, its children split by category
    (class and sign type); each category count is Poisson and, given the
    count, the unordered multiset of child subtrees has multinomial weight.
    """
    if tree.correlated != (t is not None):
        raise ValueError("pass t exactly for correlated trees")
    if tree.height > tree.ell:
        return -math.inf
    rates = correlated_rates(d, t) if t is not None else np.full((1, 4), d / 4)
    keys = _node_keys(tree)
    cls = tree.klass.tolist()
    depth = tree.depth.tolist()
    sp = tree.sign_parent.tolist()
    sc = tree.sign_child.tolist()
    logp = [0.0] * tree.size
    for v in range(tree.size - 1, -1, -1):
        if depth[v] == tree.ell:
            continue
        groups: dict[int, list[int]] = {}
        for u in tree.children[v]:
            col = 4 * (cls[u] if tree.correlated else 0) + SIGN_PAIRS.index((sp[u], sc[u]))
            groups.setdefault(col, []).append(u)
        total = 0.0
        row = rates[cls[v]]
        for col in range(rates.shape[1]):
            members = groups.get(col, [])
            total += _log_poisson(len(members), float(row[col]))
            if not members:
                continue
            total += math.lgamma(len(members) + 1)
            for mult in Counter(keys[u] for u in members).values():
                total -= math.lgamma(mult + 1)
            total += sum(logp[u] for u in members)
        logp[v] = total
    return logp[0]


def tree_probability(tree: TreeFormula, d: float, t: float | None = None) -> float:
    return math.exp(tree_log_probability(tree, d, t))


def key_histogram(trees: Iterable[TreeFormula]) -> Counter:
    return Counter(canonical_key(tr) for tr in trees)


def merge_histograms(parts: Iterable[Counter]) -> Counter:
    out: Counter = Counter()
    for p in parts:
        out.update(p)
    return out


def format_histogram(hist: Counter) -> str:
    """CSV ``key,count`` sorted by decreasing count, then key."""
    lines = ["key,count"]
    for key, count in sorted(hist.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"{key},{count}")
    return "\n".join(lines) + "\n"


def format_tree_dump(trees: Iterable[TreeFormula]) -> str:
    return "".join(canonical_key(tr) + "\n" for tr in trees)


# -- instances in a pruned correlated pair ------------------------------


@dataclass(frozen=True)
class PrunedPair:
    pair: CorrelatedPair
    hat1: PrunedCnf
    hat2: PrunedCnf

    @classmethod
    def of(cls, pair: CorrelatedPair) -> "PrunedPair":
        return cls(pair, prune(pair.formula(1)), prune(pair.formula(2)))

    def hat(self, h: int) -> PrunedCnf:
        return self.hat1 if h == 1 else self.hat2

    @cached_property
    def _adjacency(self) -> tuple[list[list[int]], list[list[int]]]:
        out = []
        for hat in (self.hat1, self.hat2):
            adj: list[list[int]] = [[] for _ in range(self.pair.n + 1)]
            clauses = hat.base.clauses
            for ci in hat.kept:
                a, b = clauses[ci]
                adj[abs(a)].append(ci)
                adj[abs(b)].append(ci)
            out.append(adj)
        return out[0], out[1]


def _other(clause: tuple[int, int], y: int) -> tuple[int, int, int]:
    a, b = clause
    if abs(a) == y:
        return (1 if a > 0 else -1), abs(b), (1 if b > 0 else -1)
    return (1 if b > 0 else -1), abs(a), (1 if a > 0 else -1)


def local_tree(pp: PrunedPair, x: int, ell: int) -> TreeFormula | None:
    """The class-labelled tree ``T`` of which ``x`` is a ``2 * ell``-instance,
    or ``None`` when ``x`` is an instance of no tree.

    Clause origin decides the labels: at a shared variable a shared clause
    must be present in both pruned formulas (it becomes shared), a private
    clause of formula ``h`` starts an ``h``-distinct subtree; below an
    ``h``-distinct variable every clause of formula ``h`` is ``h``-distinct.
    ``None`` is returned when a depth-``2 * ell`` neighbourhood is not a tree
    or a shared clause survived pruning in one formula only.
    """
    M = pp.pair.M
    adj1, adj2 = pp._adjacency
    adjs = (adj1, adj2)
    clauses = (pp.hat1.base.clauses, pp.hat2.base.clauses)
    parent = [-1]
    sp = [0]
    sc = [0]
    depth = [0]
    klass = [0]
    seen = ({x}, {x})
    # (node index, variable, clause index it hangs from, or -1)
    shared = [(0, x, -1)]
    distinct: list[tuple[int, int, int, int]] = []  # (node, var, parent clause, h)

    def add(par: int, s1: int, z: int, s2: int, k: int, c: int) -> int:
        parent.append(par)
        sp.append(s1)
        sc.append(s2)
        depth.append(k)
        klass.append(c)
        return len(parent) - 1

    head = 0
    while head < len(shared):
        node, y, pc = shared[head]
        head += 1
        k = depth[node]
        if k >= ell:
            continue
        c1 = [ci for ci in adj1[y] if ci != pc]
        c2 = [ci for ci in adj2[y] if ci != pc]
        s1 = sorted(ci for ci in c1 if ci < M)
        if s1 != sorted(ci for ci in c2 if ci < M):
            return None
        for ci in s1:
            a, z, b = _other(clauses[0][ci], y)
            if z in seen[0] or z in seen[1]:
                return None
            seen[0].add(z)
            seen[1].add(z)
            shared.append((add(node, a, z, b, k + 1, 0), z, ci))
        for h, cs in ((1, c1), (2, c2)):
            for ci in cs:
                if ci < M:
                    continue
                a, z, b = _other(clauses[h - 1][ci], y)
                if z in seen[h - 1]:
                    return None
                seen[h - 1].add(z)
                distinct.append((add(node, a, z, b, k + 1, h), z, ci, h))
    head = 0
    while head < len(distinct):
        node, y, pc, h = distinct[head]
        head += 1
        k = depth[node]
        if k >= ell:
            continue
        for ci in adjs[h - 1][y]:
            if ci == pc:
                continue
            a, z, b = _other(clauses[h - 1][ci], y)
            if z in seen[h - 1]:
                return None
            seen[h - 1].add(z)
            distinct.append((add(node, a, z, b, k + 1, h), z, ci, h))
    # breadth-first renumbering so that depth is non-decreasing
    order = sorted(range(len(parent)), key=lambda v: (depth[v], v))
    rank = {v: i for i, v in enumerate(order)}
    return _from_lists(
        [rank[parent[v]] if parent[v] >= 0 else -1 for v in order],
        [sp[v] for v in order],
        [sc[v] for v in order],
        [depth[v] for v in order],
        [klass[v] for v in order],
        ell,
        True,
    )


@dataclass(frozen=True)
class InstanceHistogram:
    counts: Counter
    non_tree: int
    n: int
    ell: int

    def frequency(self, key: str) -> float:
        return self.counts.get(key, 0) / self.n


def instance_histogram(pp: PrunedPair, ell: int) -> InstanceHistogram:
    counts: Counter = Counter()
    failed = 0
    for x in range(1, pp.pair.n + 1):
        tr = local_tree(pp, x, ell)
        if tr is None:
            failed += 1
        else:
            counts[canonical_key(tr)] += 1
    return InstanceHistogram(counts, failed, pp.pair.n, ell)


def count_instances(pp: PrunedPair, tree: TreeFormula, ell: int) -> int:
    """Number of variables that are ``2 * ell``-instances of ``tree``."""
    if tree.height > ell:
        raise ValueError("tree deeper than the requested radius")
    key = canonical_key(tree)
    return sum(
        1
        for x in range(1, pp.pair.n + 1)
        if (tr := local_tree(pp, x, ell)) is not None and canonical_key(tr) == key
    )


def iter_trees(d: float, ell: int, count: int, rng: np.random.Generator, t: float | None = None) -> Iterator[TreeFormula]:
    for _ in range(count):
        if t is None:
            yield sample_plain_tree(d, ell, rng)
        else:
            yield sample_correlated_tree(d, t, ell, rng)


def forest_key_histogram(
    d: float,
    ell: int,
    count: int,
    rng: np.random.Generator,
    t: float | None = None,
    chunk: int = 50_000,
) -> Counter:
    """Canonical-key histogram of ``count`` independent trees, grown a whole
    chunk of roots at a time (same law as repeated single-tree sampling)."""
    if t is None:
        rates = np.full((1, 4), d / 4)
    else:
        if not 0 <= t <= 1:
            raise ValueError("t must lie in [0, 1]")
        rates = correlated_rates(d, t)
    correlated = t is not None
    ncol = rates.shape[1]
    sp_col = [SIGN_PAIRS[c % 4][0] for c in range(ncol)]
    sc_col = [SIGN_PAIRS[c % 4][1] for c in range(ncol)]
    hist: Counter = Counter()
    done = 0
    while done < count:
        k = min(chunk, count - done)
        parents = [np.full(k, -1)]
        cols_all = [np.full(k, -1)]
        frontier = np.arange(k)
        frontier_cls = np.zeros(k, dtype=np.int64)
        size = k
        for _ in range(ell):
            counts = rng.poisson(rates[frontier_cls]).ravel()
            total = int(counts.sum())
            if total == 0:
                break
            cols = np.repeat(np.tile(np.arange(ncol), len(frontier)), counts)
            parents.append(np.repeat(np.repeat(frontier, ncol), counts))
            cols_all.append(cols)
            frontier = np.arange(size, size + total)
            frontier_cls = cols // 4
            size += total
        parent = np.concatenate(parents).tolist()
        cols = np.concatenate(cols_all).tolist()
        child_keys: list[list[str] | None] = [None] * size
        keys = [""] * size
        for v in range(size - 1, -1, -1):
            c = cols[v]
            tag = (CLASS_CHARS[c // 4] if c >= 0 else "S") if correlated else ""
            ck = child_keys[v]
            keys[v] = "(" + tag + ("".join(sorted(ck)) if ck else "") + ")"
            p = parent[v]
            if p >= 0:
                edge = ("+" if sp_col[c] > 0 else "-") + ("+" if sc_col[c] > 0 else "-")
                if child_keys[p] is None:
                    child_keys[p] = []
                child_keys[p].append(edge + keys[v])
        hist.update(keys[:k])
        done += k
    return hist
