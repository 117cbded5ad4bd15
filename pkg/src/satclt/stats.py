"""Streaming moments and Kolmogorov-Smirnov statistics.

The KS p-value uses the asymptotic Kolmogorov distribution

    P[sqrt(n) D_n > x] ~ 2 * sum_{k >= 1} (-1)^(k-1) exp(-2 k^2 x^2),

evaluated at ``x = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D`` (the usual small
sample correction); two-sample tests use ``n = n1 n2 / (n1 + n2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr


@dataclass
class Welford:
    """Mergeable running moments up to the fourth (Pebay's update rules)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0

    def add(self, x: float) -> None:
        n1 = self.n
        self.n += 1
        n = self.n
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        term1 = delta * dn * n1
        self.mean += dn
        self.m4 += term1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.m2 - 4 * dn * self.m3
        self.m3 += term1 * dn * (n - 2) - 3 * dn * self.m2
        self.m2 += term1

    def extend(self, xs: Iterable[float]) -> "Welford":
        for x in xs:
            self.add(float(x))
        return self

    def merge(self, other: "Welford") -> "Welford":
        """Combined accumulator; neither operand is modified."""
        if other.n == 0:
            return Welford(self.n, self.mean, self.m2, self.m3, self.m4)
        if self.n == 0:
            return Welford(other.n, other.mean, other.m2, other.m3, other.m4)
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        d2 = delta * delta
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + d2 * na * nb / n
        m3 = (
            self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3 * delta * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n**3)
            + 6 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4 * delta * (na * other.m3 - nb * self.m3) / n
        )
        return Welford(n, mean, m2, m3, m4)

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for fewer than two values)."""
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def sem(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else math.inf

    @property
    def skewness(self) -> float:
        if self.n < 2 or self.m2 == 0:
            return 0.0
        return math.sqrt(self.n) * self.m3 / self.m2**1.5

    @property
    def excess_kurtosis(self) -> float:
        if self.n < 2 or self.m2 == 0:
            return 0.0
        return self.n * self.m4 / (self.m2 * self.m2) - 3.0

    def variance_se(self) -> float:
        """Standard error of the sample variance, ``sqrt((m4 - s^4 (n-3)/(n-1)) / n)``."""
        n = self.n
        if n < 4:
            return math.inf
        mu4 = self.m4 / n
        s2 = self.variance
        return math.sqrt(max(mu4 - s2 * s2 * (n - 3) / (n - 1), 0.0) / n)


def merge_tree(parts: Sequence[Welford]) -> Welford:
    """Merge accumulators pairwise in a fixed binary-tree order."""
    items = list(parts)
    if not items:
        return Welford()
    while len(items) > 1:
        nxt = [items[i].merge(items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def kolmogorov_sf(x: float, terms: int = 100) -> float:
    """``P[K > x]`` for the Kolmogorov distribution via its alternating series."""
    if x <= 0:
        return 1.0
    if x < 0.18:
        # the series converges slowly here and the value is 1 to double precision
        return 1.0
    total = 0.0
    for k in range(1, terms + 1):
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-17:
            break
    return min(max(2.0 * total, 0.0), 1.0)


def _effective_x(d: float, n: float) -> float:
    rn = math.sqrt(n)
    return (rn + 0.12 + 0.11 / rn) * d


def normal_cdf(x: np.ndarray) -> np.ndarray:
    return ndtr(x)


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    n: int


def ks_normal(values: Sequence[float]) -> KsResult:
    """One-sample KS distance to the standard normal, with p-value."""
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    cdf = normal_cdf(x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    return KsResult(d, kolmogorov_sf(_effective_x(d, n)), n)


def ks_two_sample(a: Sequence[float], b: Sequence[float], decimals: int | None = None) -> KsResult:
    """Two-sample KS distance and asymptotic p-value.

    ``decimals`` rounds both samples first, so that values differing only by
    floating-point representation (atoms reached along different routes)
    are treated as ties.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if decimals is not None:
        x = np.round(x, decimals)
        y = np.round(y, decimals)
    x = np.sort(x)
    y = np.sort(y)
    if len(x) == 0 or len(y) == 0:
        raise ValueError("empty sample")
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / len(x)
    fy = np.searchsorted(y, grid, side="right") / len(y)
    d = float(np.max(np.abs(fx - fy)))
    ne = len(x) * len(y) / (len(x) + len(y))
    return KsResult(d, kolmogorov_sf(_effective_x(d, ne)), len(x) + len(y))


def standardize(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValueError("cannot standardize a sample with zero spread")
    return (x - x.mean()) / sd


def correlation(a: Sequence[float], b: Sequence[float]) -> float:
    return float(np.corrcoef(np.asarray(a, dtype=float), np.asarray(b, dtype=float))[0, 1])
