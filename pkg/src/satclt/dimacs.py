"""DIMACS CNF reading and writing for 2-CNFs."""
from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, TextIO

from .formula import Cnf


class DimacsError(ValueError):
    pass


def parse_dimacs(text: str) -> Cnf:
    n = None
    declared_m = None
    clauses: list[tuple[int, int]] = []
    pending: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: bad problem line {line!r}")
            n, declared_m = int(parts[2]), int(parts[3])
            continue
        if n is None:
            raise DimacsError(f"line {lineno}: clause before problem line")
        for tok in line.split():
            lit = int(tok)
            if lit != 0:
                pending.append(lit)
                continue
            if len(pending) != 2:
                raise DimacsError(f"line {lineno}: expected a 2-clause, got {pending}")
            clauses.append((pending[0], pending[1]))
            pending = []
    if pending:
        raise DimacsError("unterminated clause at end of input")
    if n is None:
        raise DimacsError("missing problem line")
    if declared_m != len(clauses):
        raise DimacsError(f"header declares {declared_m} clauses, found {len(clauses)}")
    try:
        return Cnf(n, tuple(clauses))
    except ValueError as exc:
        raise DimacsError(str(exc)) from exc


def read_dimacs(path: str | Path) -> Cnf:
    return parse_dimacs(Path(path).read_text())


def write_dimacs(cnf: Cnf, out: TextIO, comments: Iterable[str] = ()) -> None:
    for c in comments:
        out.write(f"c {c}\n")
    out.write(f"p cnf {cnf.n} {cnf.m}\n")
    for a, b in cnf.clauses:
        out.write(f"{a} {b} 0\n")


def format_dimacs(cnf: Cnf, comments: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    write_dimacs(cnf, buf, comments)
    return buf.getvalue()
