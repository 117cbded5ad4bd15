"""Population dynamics for the correlated log-likelihood fixed point.

A population is a ``(P, 2)`` array of points in the plane standing for the
empirical measure of its rows.  One update replaces every row by

    xi_1 = sum_{i <= D}  s_i log sigma(r_i X_{i,1}) + sum_{i <= D'} s'_i log sigma(r'_i X'_{i,1})
    xi_2 = sum_{i <= D}  s_i log sigma(r_i X_{i,2}) + sum_{i <= D''} s''_i log sigma(r''_i X''_{i,2})

with ``D ~ Po(t d)``, ``D', D'' ~ Po((1 - t) d)``, independent uniform signs
and rows ``X`` resampled from the current population.  ``sigma`` is the
logistic function, so ``log sigma(r x) = log((1 + r tanh(x / 2)) / 2)``.
The shared sum uses the same row, sign pair and both of its coordinates.

Convergence is monitored by a synchronous coupling: a second population,
one step ahead, is pushed through the very same random update.  The mean
squared distance between matched rows upper-bounds the squared W2 distance
between consecutive iterates, and its expectation over the next update
is at most ``d / 2`` times its current value.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .rng import stream

XI_CLAMP = 700.0
LOG2 = math.log(2.0)


def log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def psi_transform(x: np.ndarray) -> np.ndarray:
    """Coordinatewise ``(1 + tanh(x / 2)) / 2``."""
    return 0.5 * (1.0 + np.tanh(np.asarray(x, dtype=float) / 2.0))


def phi_transform(p: np.ndarray) -> np.ndarray:
    """Coordinatewise ``log(p / (1 - p))``; inverse of ``psi_transform``."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("phi_transform needs values strictly inside (0, 1)")
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class PopulationInfo:
    d: float
    t: float
    iteration: int
    seed: int | None
    converged: bool = False
    distances: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class Population:
    points: np.ndarray
    info: PopulationInfo

    @property
    def size(self) -> int:
        return len(self.points)

    @classmethod
    def atom(cls, size: int, d: float, t: float, seed: int | None = None, at=(0.0, 0.0)) -> "Population":
        pts = np.empty((size, 2))
        pts[:] = at
        return cls(pts, PopulationInfo(d, t, 0, seed))

    def second_moment(self) -> float:
        return float(np.mean(np.sum(self.points**2, axis=1)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        i = self.info
        buf.write(f"# d={i.d!r} t={i.t!r} iteration={i.iteration} seed={i.seed}\n")
        buf.write("xi1,xi2\n")
        for a, b in self.points.tolist():
            buf.write(f"{a!r},{b!r}\n")
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class _Draw:
    """The randomness of one update, so that it can be applied to two
    populations (synchronous coupling)."""

    owner_shared: np.ndarray
    idx_shared: np.ndarray
    s_shared: np.ndarray
    r_shared: np.ndarray
    owner1: np.ndarray
    idx1: np.ndarray
    s1: np.ndarray
    r1: np.ndarray
    owner2: np.ndarray
    idx2: np.ndarray
    s2: np.ndarray
    r2: np.ndarray


def _signs(rng: np.random.Generator, k: int) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=k) - 1).astype(float)


def _draw(size: int, source: int, d: float, t: float, rng: np.random.Generator) -> _Draw:
    out = []
    for mean in (t * d, (1 - t) * d, (1 - t) * d):
        counts = rng.poisson(mean, size=size)
        k = int(counts.sum())
        owner = np.repeat(np.arange(size), counts)
        idx = rng.integers(0, source, size=k)
        out.extend([owner, idx, _signs(rng, k), _signs(rng, k)])
    return _Draw(*out)


def _apply(points: np.ndarray, draw: _Draw, size: int) -> np.ndarray:
    x = np.clip(points, -XI_CLAMP, XI_CLAMP)
    new = np.zeros((size, 2))
    if len(draw.idx_shared):
        terms = draw.s_shared[:, None] * log_sigmoid(draw.r_shared[:, None] * x[draw.idx_shared])
        new[:, 0] += np.bincount(draw.owner_shared, weights=terms[:, 0], minlength=size)
        new[:, 1] += np.bincount(draw.owner_shared, weights=terms[:, 1], minlength=size)
    if len(draw.idx1):
        terms = draw.s1 * log_sigmoid(draw.r1 * x[draw.idx1, 0])
        new[:, 0] += np.bincount(draw.owner1, weights=terms, minlength=size)
    if len(draw.idx2):
        terms = draw.s2 * log_sigmoid(draw.r2 * x[draw.idx2, 1])
        new[:, 1] += np.bincount(draw.owner2, weights=terms, minlength=size)
    return new


def _check(d: float, t: float) -> None:
    if not 0 < d < 2:
        raise ValueError("d must lie in (0, 2)")
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")


def ll_update(pop: Population, d: float, t: float, rng: np.random.Generator) -> Population:
    """One population-dynamics step of the log-likelihood operator."""
    _check(d, t)
    draw = _draw(pop.size, pop.size, d, t, rng)
    info = PopulationInfo(d, t, pop.info.iteration + 1, pop.info.seed)
    return Population(_apply(pop.points, draw, pop.size), info)


def coupled_update(
    a: np.ndarray, b: np.ndarray, d: float, t: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one and the same random update to two equal-size populations."""
    _check(d, t)
    draw = _draw(len(a), len(a), d, t, rng)
    return _apply(a, draw, len(a)), _apply(b, draw, len(b))


def coupled_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared distance of matched rows, an upper bound on W2^2."""
    return float(np.mean(np.sum((a - b) ** 2, axis=1)))


def expected_coupled_distance(a: np.ndarray, b: np.ndarray, d: float) -> float:
    """Expectation, over one coupled update, of the next ``coupled_distance``.

    Every output coordinate receives Po(d) terms in total; the random signs
    ``s`` cancel cross terms, so the expectation is
    ``d * mean_i sum_j (1/2) sum_r (log sigma(r a_ij) - log sigma(r b_ij))^2``.
    This removes the resampling noise, which dominates the realised value
    once a handful of rows carry most of the distance.
    """
    a = np.clip(a, -XI_CLAMP, XI_CLAMP)
    b = np.clip(b, -XI_CLAMP, XI_CLAMP)
    g = (log_sigmoid(a) - log_sigmoid(b)) ** 2 + (log_sigmoid(-a) - log_sigmoid(-b)) ** 2
    return float(d * 0.5 * np.mean(np.sum(g, axis=1)))


@dataclass(frozen=True)
class ContractionTrace:
    """Per-iteration squared-distance bounds between consecutive iterates.

    ``realised[k]`` is the coupled distance after ``k`` coupled updates and
    ``expected[k]`` (``k >= 1``) its conditional expectation given the pair
    of populations one step earlier.
    """

    realised: tuple[float, ...]
    expected: tuple[float, ...]

    def ratios(self) -> list[float]:
        """``expected[k + 1] / realised[k]``: the one-step contraction factor."""
        return [self.expected[k + 1] / self.realised[k] for k in range(len(self.realised) - 1) if self.realised[k] > 0]

    def realised_ratios(self) -> list[float]:
        r = self.realised
        return [r[k + 1] / r[k] for k in range(len(r) - 1) if r[k] > 0]


def contraction_trace(d: float, t: float, size: int, steps: int, seed: int, tag: str = "popdyn") -> ContractionTrace:
    """Run the coupled pair (origin atom, one step ahead) for ``steps`` updates."""
    _check(d, t)
    rng = stream(seed, tag)
    x = np.zeros((size, 2))
    y = _apply(x, _draw(size, size, d, t, rng), size)
    realised = [coupled_distance(x, y)]
    expected = [math.nan]
    for _ in range(steps):
        expected.append(expected_coupled_distance(x, y, d))
        x, y = coupled_update(x, y, d, t, rng)
        realised.append(coupled_distance(x, y))
    return ContractionTrace(tuple(realised), tuple(expected))


def iterate_to_fixed_point(
    d: float,
    t: float,
    size: int = 100_000,
    tol: float = 1e-3,
    max_iter: int = 200,
    seed: int = 0,
    min_iter: int = 0,
    tag: str = "popdyn",
) -> Population:
    """Iterate from the atom at the origin until the coupled W2 bound between
    the next two iterates (in conditional expectation) drops below ``tol``,
    after at least ``min_iter`` steps, or ``max_iter`` steps have been made.

    The returned population is the leading member of the coupled pair; its
    ``info`` holds the realised squared distances and the convergence flag.
    """
    _check(d, t)
    rng = stream(seed, tag)
    x = np.zeros((size, 2))
    y = _apply(x, _draw(size, size, d, t, rng), size)
    distances = [coupled_distance(x, y)]
    it = 1
    converged = False
    while True:
        nxt = expected_coupled_distance(x, y, d)
        if math.sqrt(nxt) < tol and it >= min_iter:
            converged = True
            break
        if it >= max_iter:
            break
        x, y = coupled_update(x, y, d, t, rng)
        distances.append(coupled_distance(x, y))
        it += 1
    return Population(y, PopulationInfo(d, t, it, seed, converged, tuple(distances)))


def iterate_population(d: float, t: float, size: int, steps: int, seed: int, tag: str = "popdyn") -> list[Population]:
    """``steps`` plain updates from the origin atom; returns every iterate."""
    _check(d, t)
    rng = stream(seed, tag)
    pops = [Population.atom(size, d, t, seed)]
    for _ in range(steps):
        pops.append(ll_update(pops[-1], d, t, rng))
    return pops


# -- Wasserstein diagnostics ----------------------------------------------


@dataclass(frozen=True)
class W2Estimate:
    exact: float
    lower_bound: float
    subsample: int


def w2_exact(a: np.ndarray, b: np.ndarray) -> float:
    """W2 between two equal-size empirical measures by optimal assignment."""
    if len(a) != len(b):
        raise ValueError("populations must have equal size")
    cost = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(max(float(cost[rows, cols].mean()), 0.0))


def w2_marginal_lower_bound(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of the per-coordinate squared W2 (sorted quantile matching) is a
    lower bound for the squared W2 of the joint laws."""
    if len(a) != len(b):
        raise ValueError("populations must have equal size")
    total = 0.0
    for j in range(a.shape[1]):
        total += float(np.mean((np.sort(a[:, j]) - np.sort(b[:, j])) ** 2))
    return math.sqrt(total)


def wasserstein2_estimate(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator | None = None, subsample: int = 2000
) -> W2Estimate:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    k = min(len(a), len(b), subsample)
    if k < len(a) or k < len(b):
        if rng is None:
            rng = stream(0, "w2-subsample")
        a_sub = a[rng.choice(len(a), size=k, replace=False)]
        b_sub = b[rng.choice(len(b), size=k, replace=False)]
    else:
        a_sub, b_sub = a, b
    lower = w2_marginal_lower_bound(a, b) if len(a) == len(b) else w2_marginal_lower_bound(a_sub, b_sub)
    return W2Estimate(w2_exact(a_sub, b_sub), lower, k)


# -- the cross functional -------------------------------------------------


def _log_one_minus_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``log(1 - sigma(a) sigma(b))`` without cancellation:
    ``1 - sigma(a) sigma(b) = (e^-a + e^-b + e^-(a+b)) sigma(a) sigma(b)``."""
    num = np.logaddexp(np.logaddexp(-a, -b), -a - b)
    return num - np.logaddexp(0.0, -a) - np.logaddexp(0.0, -b)


def bethe_cross_functional(
    points: np.ndarray,
    rng: np.random.Generator,
    samples: int = 1_000_000,
    clamp: float | None = None,
    chunk: int = 250_000,
) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of
    ``E prod_h log(1 - (1 + r1 tanh(X1h/2)) (1 + r2 tanh(X2h/2)) / 4)``
    for two independent rows ``X1, X2`` and independent signs ``r1, r2``.

    ``clamp`` optionally truncates every log factor to ``[-clamp, clamp]``.
    """
    pts = np.clip(np.asarray(points, dtype=float), -XI_CLAMP, XI_CLAMP)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        i1 = rng.integers(0, len(pts), size=k)
        i2 = rng.integers(0, len(pts), size=k)
        r1 = _signs(rng, k)[:, None]
        r2 = _signs(rng, k)[:, None]
        f = _log_one_minus_product(r1 * pts[i1], r2 * pts[i2])
        if clamp is not None:
            f = np.clip(f, -clamp, clamp)
        v = f[:, 0] * f[:, 1]
        total += float(v.sum())
        total_sq += float((v * v).sum())
        done += k
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    se = math.sqrt(var / samples) if samples > 1 else math.inf
    return mean, se


# -- the variance constant ------------------------------------------------


@dataclass(frozen=True)
class EtaNode:
    t: float
    b: float
    se: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class EtaResult:
    d: float
    eta_squared: float
    se: float
    b_at_zero: float
    nodes: tuple[EtaNode, ...]
    quadrature: str
    params: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return all(n.converged for n in self.nodes)

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "eta2": self.eta_squared,
                "se": self.se,
                "nodes": [{"t": n.t, "b": n.b, "se": n.se, "converged": n.converged, "iterations": n.iterations} for n in self.nodes],
                "b0": self.b_at_zero,
                "quadrature": self.quadrature,
                "params": self.params,
            },
            sort_keys=True,
        )


def simpson_weights(k: int) -> np.ndarray:
    """Composite Simpson weights for ``k`` equispaced nodes on ``[0, 1]``."""
    if k < 3 or k % 2 == 0:
        raise ValueError("composite Simpson needs an odd number of nodes >= 3")
    h = 1.0 / (k - 1)
    w = np.full(k, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def eta_squared(
    d: float,
    quad_k: int = 21,
    size: int = 100_000,
    tol: float = 1e-3,
    seed: int = 0,
    samples: int = 1_000_000,
    max_iter: int = 200,
    clamp: float | None = None,
) -> EtaResult:
    """Integrate the cross functional of the fixed point over ``t`` by
    composite Simpson and subtract its value at ``t = 0``.

    All nodes use the same random streams (common random numbers), which
    makes the integrand smooth in ``t``.  The reported standard error
    treats nodes as independent.
    """
    _check(d, 0.0)
    ts = np.linspace(0.0, 1.0, quad_k)
    weights = simpson_weights(quad_k)
    nodes = []
    for t in ts.tolist():
        pop = iterate_to_fixed_point(d, t, size=size, tol=tol, max_iter=max_iter, seed=seed)
        b, se = bethe_cross_functional(pop.points, stream(seed, "bethe"), samples, clamp)
        nodes.append(EtaNode(t, b, se, pop.info.converged, pop.info.iteration))
    bs = np.array([n.b for n in nodes])
    ses = np.array([n.se for n in nodes])
    coef = weights.copy()
    coef[0] -= 1.0  # the t = 0 node doubles as the subtracted term
    value = float(coef @ bs)
    se = float(math.sqrt(np.sum((coef * ses) ** 2)))
    params = {"quad_k": quad_k, "pop_size": size, "tol": tol, "seed": seed, "samples": samples, "max_iter": max_iter}
    return EtaResult(d, value, se, nodes[0].b, tuple(nodes), f"composite-simpson-{quad_k}", params)


# -- the same update on (0, 1)^2 ------------------------------------------


def bp_tensor_update(points: np.ndarray, d: float, t: float, rng: np.random.Generator) -> np.ndarray:
    """One density-evolution step on marginal pairs in ``(0, 1)^2``.

    Each coordinate is ``N_-(N_- + N_+)^{-1}`` where ``N_s`` multiplies
    ``(1 + r (2 mu - 1)) / 2`` over the clauses of sign ``s``: Po(t d / 2)
    shared ones (same row and sign for both coordinates) and Po((1-t) d / 2)
    private ones per coordinate.  Products are formed in the log domain;
    an undefined ratio yields 1/2.
    """
    _check(d, t)
    mu = np.asarray(points, dtype=float)
    size = len(mu)
    logn = np.zeros((2, size, 2))  # [s index (0: -1, 1: +1), row, coordinate]
    for si in (0, 1):
        for kind, mean in (("shared", t * d / 2), ("one", (1 - t) * d / 2), ("two", (1 - t) * d / 2)):
            counts = rng.poisson(mean, size=size)
            k = int(counts.sum())
            owner = np.repeat(np.arange(size), counts)
            idx = rng.integers(0, size, size=k)
            r = _signs(rng, k)
            with np.errstate(divide="ignore"):
                if kind == "shared":
                    terms = np.log(np.where(r[:, None] > 0, mu[idx], 1.0 - mu[idx]))
                    for j in (0, 1):
                        logn[si, :, j] += np.bincount(owner, weights=terms[:, j], minlength=size)
                else:
                    j = 0 if kind == "one" else 1
                    terms = np.log(np.where(r > 0, mu[idx, j], 1.0 - mu[idx, j]))
                    logn[si, :, j] += np.bincount(owner, weights=terms, minlength=size)
    with np.errstate(invalid="ignore"):
        diff = logn[1] - logn[0]
        out = np.where(np.isnan(diff), 0.5, 1.0 / (1.0 + np.exp(np.clip(diff, -XI_CLAMP, XI_CLAMP))))
    return out


def population_dump_csv(pop: Population) -> str:
    return pop.to_csv()
