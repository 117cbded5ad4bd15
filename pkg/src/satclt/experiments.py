"""Monte Carlo experiments and their JSON reports.

Every experiment is a pure function of an ``ExperimentConfig``.  Trial ``i``
draws all of its randomness from ``stream(seed, <experiment tag>, i)``, trials
are grouped into fixed chunks and per-chunk moment accumulators are merged in
a fixed binary tree, so a report does not depend on the number of workers.
Wall-clock runtime is only attached on request, keeping reports
byte-for-byte reproducible.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .counting import (
    DEFAULT_NODE_BUDGET,
    CountBudgetExceeded,
    count_models,
    is_satisfiable,
    survival_probability_exact,
)
from .density import EtaResult, eta_squared, iterate_to_fixed_point
from .formula import Cnf, clause_count_for_density, clause_key, sample_correlated_pair, sample_random_cnf
from .gw_tree import (
    PrunedPair,
    forest_key_histogram,
    instance_histogram,
    project,
    sample_correlated_tree,
    tree_from_key,
    tree_probability,
)
from .bp import boundary_influence
from .rng import stream
from .stats import Welford, ks_normal, merge_tree, standardize
from .ucp import prune

CHUNK = 16
MAX_SAT_ATTEMPTS = 1000


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _floats(value: Any) -> tuple[float, ...]:
    if isinstance(value, str):
        return tuple(float(v) for v in value.replace(",", " ").split())
    return tuple(float(v) for v in value)


def _ints(value: Any) -> tuple[int, ...]:
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return tuple(int(v) for v in value)


def _bool(value: Any) -> bool:
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return bool(value)


def _opt(conv: Callable[[Any], Any]) -> Callable[[Any], Any]:
    def inner(value: Any) -> Any:
        if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none")):
            return None
        return conv(value)

    return inner


@dataclass(frozen=True)
class ExperimentConfig:
    d: float = 1.0
    n: int = 2000
    trials: int = 100
    seed: int = 0
    t: float = 0.5
    ell: int = 1
    pop_size: int = 100_000
    tol: float = 1e-3
    quad_k: int = 21
    workers: int = 1
    out: str | None = None
    max_iter: int = 200
    samples: int = 1_000_000
    budget: int = DEFAULT_NODE_BUDGET
    alpha: float = 0.01
    tree_samples: int = 1_000_000
    top_keys: int = 10
    self_test: bool = False
    m: int | None = None
    direct_trials: int | None = None
    eta2: float | None = None
    eta2_se: float = 0.0
    ds: tuple[float, ...] = ()
    ts: tuple[float, ...] = (0.0, 0.5, 1.0)
    ells: tuple[int, ...] = (1, 3)
    population_csv: str | None = None
    eta_json: str | None = None
    grid_csv: str | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        checks = [
            (self.d > 0 and math.isfinite(self.d), "d must be positive"),
            (self.n >= 2, "n must be at least 2"),
            (self.trials >= 1, "trials must be at least 1"),
            (0 <= self.t <= 1, "t must lie in [0, 1]"),
            (self.ell >= 0, "ell must be non-negative"),
            (self.pop_size >= 1, "pop-size must be positive"),
            (self.tol > 0, "tol must be positive"),
            (self.quad_k >= 3 and self.quad_k % 2 == 1, "quad-k must be odd and at least 3"),
            (self.workers >= 1, "workers must be at least 1"),
            (self.max_iter >= 1, "max-iter must be positive"),
            (self.samples >= 1, "samples must be positive"),
            (self.budget >= 1, "budget must be positive"),
            (0 < self.alpha < 1, "alpha must lie in (0, 1)"),
            (self.tree_samples >= 1, "tree-samples must be positive"),
            (self.top_keys >= 1, "top-keys must be positive"),
            (self.m is None or self.m >= 0, "m must be non-negative"),
            (self.direct_trials is None or self.direct_trials >= 2, "direct-trials must be at least 2"),
            (self.eta2 is None or self.eta2 > 0, "eta2 must be positive"),
            (all(x > 0 for x in self.ds), "every density in ds must be positive"),
            (all(0 <= x <= 1 for x in self.ts), "every t in ts must lie in [0, 1]"),
            (all(x >= 0 for x in self.ells), "every ell in ells must be non-negative"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    _CONVERTERS = {
        "d": float,
        "n": int,
        "trials": int,
        "seed": int,
        "t": float,
        "ell": int,
        "pop_size": int,
        "tol": float,
        "quad_k": int,
        "workers": int,
        "out": _opt(str),
        "max_iter": int,
        "samples": int,
        "budget": int,
        "alpha": float,
        "tree_samples": int,
        "top_keys": int,
        "self_test": _bool,
        "m": _opt(int),
        "direct_trials": _opt(int),
        "eta2": _opt(float),
        "eta2_se": float,
        "ds": _floats,
        "ts": _floats,
        "ells": _ints,
        "population_csv": _opt(str),
        "eta_json": _opt(str),
        "grid_csv": _opt(str),
    }

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Build a config from loosely typed values (strings allowed) on top
        of ``base``; unknown keys and unparsable values raise ``ConfigError``."""
        current = asdict(base) if base is not None else {}
        for raw_key, value in values.items():
            key = raw_key.strip().replace("-", "_")
            conv = cls._CONVERTERS.get(key)
            if conv is None:
                raise ConfigError(f"unknown config key {raw_key!r}")
            try:
                current[key] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {raw_key!r}: {value!r}") from exc
        return cls(**current)

    @classmethod
    def from_file(cls, path: str | Path, base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        """Flat ``key = value`` file; ``#`` starts a comment."""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
        return cls.from_mapping(values, base)

    def replace(self, **changes: Any) -> "ExperimentConfig":
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def clause_count(self) -> int:
        return self.m if self.m is not None else clause_count_for_density(self.n, self.d)


@dataclass
class ExperimentReport:
    experiment: str
    config: dict[str, Any]
    statistics: dict[str, Any] = field(default_factory=dict)
    excluded: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    runtime: float | None = None
    version: str = __version__

    def to_dict(self, include_runtime: bool = False) -> dict[str, Any]:
        data = asdict(self)
        if not include_runtime:
            data.pop("runtime")
        return data

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(_clean(self.to_dict(include_runtime)), sort_keys=True, indent=2) + "\n"


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


# -- deterministic trial runner -------------------------------------------


def _run_chunk(job: tuple[Callable[[ExperimentConfig, int], Any], ExperimentConfig, int, int]) -> list[Any]:
    fn, cfg, start, stop = job
    return [fn(cfg, i) for i in range(start, stop)]


def run_trials(fn: Callable[[ExperimentConfig, int], Any], cfg: ExperimentConfig, total: int) -> list[Any]:
    """``[fn(cfg, i) for i in range(total)]``, spread over ``cfg.workers``
    processes in fixed chunks; ``fn`` must be a module-level function."""
    jobs = [(fn, cfg, a, min(a + CHUNK, total)) for a in range(0, total, CHUNK)]
    if cfg.workers == 1 or len(jobs) <= 1:
        parts = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    return [r for part in parts for r in part]


def moments(values: Sequence[float]) -> Welford:
    """Welford accumulators over fixed chunks of ``values``, tree-merged."""
    return merge_tree([Welford().extend(values[a : a + CHUNK]) for a in range(0, len(values), CHUNK)])


def _moment_stats(acc: Welford) -> dict[str, Any]:
    return {
        "count": acc.n,
        "mean": acc.mean if acc.n else None,
        "sample_variance": acc.variance,
        "variance_se": acc.variance_se() if acc.n >= 4 else None,
        "sem": acc.sem if acc.n >= 2 else None,
        "skewness": acc.skewness,
        "excess_kurtosis": acc.excess_kurtosis,
    }


def round_half_up(x: float) -> int:
    return int(Decimal(repr(float(x))).to_integral_value(rounding=ROUND_HALF_UP))


def _timed(fn: Callable[[ExperimentConfig], ExperimentReport]) -> Callable[[ExperimentConfig], ExperimentReport]:
    def inner(cfg: ExperimentConfig) -> ExperimentReport:
        t0 = time.perf_counter()
        report = fn(cfg)
        report.runtime = time.perf_counter() - t0
        return report

    inner.__name__ = fn.__name__
    inner.__doc__ = fn.__doc__
    return inner


# -- log Z of pruned random formulas ---------------------------------------


@dataclass(frozen=True)
class LogCountTrial:
    log_z: float | None
    nodes: int
    removed: int
    sat_original: bool


def log_count_trial(cfg: ExperimentConfig, i: int) -> LogCountTrial:
    cnf = sample_random_cnf(cfg.n, cfg.clause_count, stream(cfg.seed, "formula", i))
    hat = prune(cnf)
    sat = is_satisfiable(cnf)
    try:
        mc = count_models(hat.cnf, budget=cfg.budget)
    except CountBudgetExceeded:
        return LogCountTrial(None, cfg.budget, len(hat.removed), sat)
    return LogCountTrial(mc.log_value, mc.nodes, len(hat.removed), sat)


def collect_log_counts(cfg: ExperimentConfig) -> tuple[list[float], dict[str, int], dict[str, Any]]:
    """Exact ``log Z`` of the pruned formula for every trial.

    Returns the values of the counted trials, exclusion counts and side
    statistics (pruning activity, unsatisfiable originals).
    """
    trials = run_trials(log_count_trial, cfg, cfg.trials)
    values = [r.log_z for r in trials if r.log_z is not None]
    excluded = {"budget_exceeded": sum(r.log_z is None for r in trials)}
    side = {
        "clauses": cfg.clause_count,
        "unsat_original": sum(not r.sat_original for r in trials),
        "mean_removed_clauses": float(np.mean([r.removed for r in trials])),
        "max_nodes": max(r.nodes for r in trials),
    }
    return values, excluded, side


def variance_statistics(values: Sequence[float], m: int, eta: EtaResult | None, eta2: float, eta2_se: float) -> tuple[dict[str, Any], list[str]]:
    acc = moments(values)
    stats = _moment_stats(acc)
    warnings = []
    if acc.n < 2:
        warnings.append("degenerate sample: fewer than two counted trials, variance reported as 0")
    var = acc.variance
    var_se = acc.variance_se() if acc.n >= 4 else math.inf
    stats["m"] = m
    stats["variance_per_m"] = var / m if m else None
    stats["variance_per_m_se"] = var_se / m if m and math.isfinite(var_se) else None
    stats["eta2"] = eta2
    stats["eta2_se"] = eta2_se
    if m and eta2 > 0:
        ratio = var / m / eta2
        rel = math.hypot(var_se / var if var > 0 else math.inf, eta2_se / eta2)
        half = 1.959963984540054 * ratio * rel
        stats["ratio"] = ratio
        stats["ratio_ci95"] = [ratio - half, ratio + half] if math.isfinite(half) else None
    if eta is not None:
        stats["eta_converged"] = eta.converged
        if not eta.converged:
            warnings.append("population dynamics did not converge at every quadrature node")
    return stats, warnings


def _eta_for(cfg: ExperimentConfig, d: float) -> EtaResult:
    return eta_squared(
        d,
        quad_k=cfg.quad_k,
        size=cfg.pop_size,
        tol=cfg.tol,
        seed=cfg.seed,
        samples=cfg.samples,
        max_iter=cfg.max_iter,
    )


@_timed
def cmd_variance(cfg: ExperimentConfig) -> ExperimentReport:
    """Empirical ``Var log Z / m`` of pruned formulas against ``eta^2(d)``."""
    values, excluded, side = collect_log_counts(cfg)
    eta = None
    if cfg.eta2 is not None:
        eta2, eta2_se = cfg.eta2, cfg.eta2_se
    else:
        eta = _eta_for(cfg, cfg.d)
        eta2, eta2_se = eta.eta_squared, eta.se
    stats, warnings = variance_statistics(values, cfg.clause_count, eta, eta2, eta2_se)
    stats.update(side)
    return ExperimentReport("variance", cfg.to_dict(), stats, excluded, warnings)


CALIBRATION_DRAWS = 1000


def calibrated_ks_pvalue(statistic: float, n: int, rng: np.random.Generator, draws: int = CALIBRATION_DRAWS) -> float:
    """Monte Carlo p-value of a KS distance computed after standardizing by
    the sample's own mean and sd (the asymptotic series is conservative
    then, because the fitted parameters pull the sample towards N(0, 1))."""
    exceed = 0
    for _ in range(draws):
        if ks_normal(standardize(rng.standard_normal(n))).statistic >= statistic:
            exceed += 1
    return (exceed + 1) / (draws + 1)


def clt_statistics(
    values: Sequence[float], alpha: float, seed: int = 0, standardized: bool = True
) -> tuple[dict[str, Any], list[str]]:
    """KS distance to N(0, 1) of the values after standardization (or of the
    raw values when ``standardized`` is false), with the asymptotic p-value
    and, for standardized values, a Monte Carlo calibrated one."""
    acc = moments(values)
    stats = _moment_stats(acc)
    warnings: list[str] = []
    if acc.n < 2 or acc.variance <= 0:
        warnings.append("cannot standardize: fewer than two distinct values")
        stats.update(ks_distance=None, p_value=None, rejected=None)
        return stats, warnings
    x = standardize(values) if standardized else np.asarray(values, dtype=float)
    ks = ks_normal(x)
    stats.update(ks_distance=ks.statistic, p_value=ks.pvalue, rejected=ks.pvalue < alpha, alpha=alpha)
    if standardized:
        stats["p_value_calibrated"] = calibrated_ks_pvalue(ks.statistic, ks.n, stream(seed, "ks-calibration"))
    return stats, warnings


@_timed
def cmd_clt(cfg: ExperimentConfig) -> ExperimentReport:
    """KS distance of standardized ``log Z`` values to the standard normal.

    With ``self_test`` the values are exact N(0, 1) draws tested without
    standardization, so the reported p-values should be uniform over seeds.
    """
    if cfg.self_test:
        values = stream(cfg.seed, "clt-self-test").standard_normal(cfg.trials).tolist()
        excluded: dict[str, int] = {}
        side: dict[str, Any] = {"self_test": True}
    else:
        values, excluded, side = collect_log_counts(cfg)
    stats, warnings = clt_statistics(values, cfg.alpha, cfg.seed, standardized=not cfg.self_test)
    stats.update(side)
    return ExperimentReport("clt", cfg.to_dict(), stats, excluded, warnings)


# -- effect of pruning ---------------------------------------------------


@dataclass(frozen=True)
class PruneImpactTrial:
    diff: float | None
    exact_ok: bool
    unsat_attempts: int
    removed: int
    bound: int = 0


def prune_impact_trial(cfg: ExperimentConfig, i: int) -> PruneImpactTrial:
    unsat = 0
    for attempt in range(MAX_SAT_ATTEMPTS):
        cnf = sample_random_cnf(cfg.n, cfg.clause_count, stream(cfg.seed, "prune-impact", i, attempt))
        if is_satisfiable(cnf):
            break
        unsat += 1
    else:
        return PruneImpactTrial(None, True, unsat, 0)
    hat = prune(cnf)
    try:
        z = count_models(cnf, budget=cfg.budget)
        zhat = z if not hat.removed else count_models(hat.cnf, budget=cfg.budget)
    except CountBudgetExceeded:
        return PruneImpactTrial(None, True, unsat, len(hat.removed))
    # pruning cannot add more than |V(l)| free variables per conflicting literal l
    bound = sum(size for _, size in hat.conflict_stats.values())
    return PruneImpactTrial(zhat.log_value - z.log_value, zhat.count >= z.count, unsat, len(hat.removed), bound)


@_timed
def cmd_prune_impact(cfg: ExperimentConfig) -> ExperimentReport:
    """Distribution of ``log Z(pruned) - log Z`` over satisfiable formulas."""
    if cfg.d >= 2:
        raise ConfigError("prune-impact needs d < 2")
    trials = run_trials(prune_impact_trial, cfg, cfg.trials)
    diffs = [r.diff for r in trials if r.diff is not None]
    threshold = cfg.n ** (1.0 / 3.0)
    stats: dict[str, Any] = _moment_stats(moments(diffs))
    stats["threshold"] = threshold
    stats["negative"] = sum(not r.exact_ok for r in trials)
    stats["bound_violations"] = sum(r.diff is not None and r.diff > r.bound * math.log(2) + 1e-9 for r in trials)
    stats["zero_fraction"] = float(np.mean([x == 0 for x in diffs])) if diffs else None
    stats["exceedance_fraction"] = float(np.mean([x > threshold for x in diffs])) if diffs else None
    stats["max"] = max(diffs) if diffs else None
    stats["quantiles"] = (
        {str(q): float(np.quantile(diffs, q)) for q in (0.5, 0.9, 0.99)} if diffs else None
    )
    stats["mean_removed_clauses"] = float(np.mean([r.removed for r in trials]))
    excluded = {
        "unsat": sum(r.unsat_attempts for r in trials),
        "budget_exceeded": sum(r.diff is None and r.unsat_attempts < MAX_SAT_ATTEMPTS for r in trials),
        "no_satisfiable_sample": sum(r.unsat_attempts >= MAX_SAT_ATTEMPTS for r in trials),
    }
    warnings = ["negative difference observed"] if stats["negative"] else []
    return ExperimentReport("prune-impact", cfg.to_dict(), stats, excluded, warnings)


# -- local weak convergence ------------------------------------------------


def lwc_clause_counts(n: int, d: float, t: float) -> tuple[int, int]:
    """Shared and private clause counts ``t d n / 2`` and ``(1 - t) d n / 2``."""
    return round_half_up(t * d * n / 2), round_half_up((1 - t) * d * n / 2)


@_timed
def cmd_lwc(cfg: ExperimentConfig) -> ExperimentReport:
    """Instance frequencies of the most likely tree keys in one pruned
    correlated pair, against Galton-Watson estimates."""
    if cfg.ell > 2:
        raise ConfigError("lwc needs ell <= 2")
    M, Mp = lwc_clause_counts(cfg.n, cfg.d, cfg.t)
    pair = sample_correlated_pair(cfg.n, M, Mp, stream(cfg.seed, "lwc-pair"))
    pp = PrunedPair.of(pair)
    inst = instance_histogram(pp, cfg.ell)
    gw = forest_key_histogram(cfg.d, cfg.ell, cfg.tree_samples, stream(cfg.seed, "lwc-gw"), t=cfg.t)
    top = sorted(gw.items(), key=lambda kv: (-kv[1], kv[0]))[: cfg.top_keys]
    rows = []
    for key, c in top:
        g = c / cfg.tree_samples
        f = inst.frequency(key)
        rows.append(
            {
                "key": key,
                "gw_frequency": g,
                "gw_probability": tree_probability(tree_from_key(key, cfg.ell), cfg.d, cfg.t),
                "instance_frequency": f,
                "deviation": abs(f - g),
            }
        )
    stats = {
        "shared_clauses": M,
        "private_clauses": Mp,
        "removed_clauses": [len(pp.hat1.removed), len(pp.hat2.removed)],
        "non_tree_fraction": inst.non_tree / cfg.n,
        "keys": rows,
        "max_deviation": max(r["deviation"] for r in rows),
    }
    return ExperimentReport("lwc", cfg.to_dict(), stats)


# -- decay of boundary influence -------------------------------------------


def gibbs_trial(cfg: ExperimentConfig, i: int) -> list[tuple[float, bool, float, bool]]:
    """Influences on both projections, for every ``(ell, t)`` in the grid,
    of trial ``i``; flattened as ``[(inf1, trunc1, inf2, trunc2), ...]``."""
    out = []
    for a, ell in enumerate(cfg.ells):
        for b, t in enumerate(cfg.ts):
            tree = sample_correlated_tree(cfg.d, t, ell, stream(cfg.seed, "gibbs", a, b, i))
            res = []
            for h in (1, 2):
                inf = boundary_influence(project(tree, h), stream(cfg.seed, "gibbs-fallback", a, b, i, h))
                res.extend([inf.value, inf.truncated])
            out.append(tuple(res))
    return out


@_timed
def cmd_gibbs(cfg: ExperimentConfig) -> ExperimentReport:
    """Mean boundary influence per depth, ``t`` and projection, and a
    one-sided test of decay between the smallest and largest depth."""
    if any(ell > 4 for ell in cfg.ells):
        raise ConfigError("gibbs needs every ell <= 4")
    trials = run_trials(gibbs_trial, cfg, cfg.trials)
    grid = [(ell, t) for ell in cfg.ells for t in cfg.ts]
    curves: dict[str, dict[str, Any]] = {}
    truncated = 0
    for g, (ell, t) in enumerate(grid):
        for h in (1, 2):
            vals = [tr[g][2 * (h - 1)] for tr in trials]
            truncated += sum(tr[g][2 * h - 1] for tr in trials)
            acc = moments(vals)
            curves[f"ell={ell},t={t!r},h={h}"] = {
                "ell": ell,
                "t": t,
                "h": h,
                "mean": acc.mean,
                "se": acc.sem if acc.n >= 2 else None,
            }
    decay = {}
    lo, hi = min(cfg.ells), max(cfg.ells)
    z = 1.6448536269514722  # one-sided 95%
    for t in cfg.ts:
        for h in (1, 2):
            a = curves[f"ell={lo},t={t!r},h={h}"]
            b = curves[f"ell={hi},t={t!r},h={h}"]
            se = math.hypot(a["se"] or 0.0, b["se"] or 0.0)
            diff = a["mean"] - b["mean"]
            decay[f"t={t!r},h={h}"] = {
                "difference": diff,
                "se": se,
                "significant": bool(hi > lo and diff - z * se > 0),
            }
    warnings = [f"{truncated} influence values are sampled lower bounds"] if truncated else []
    stats = {"curves": curves, "decay": decay, "truncated": truncated}
    return ExperimentReport("gibbs", cfg.to_dict(), stats, {}, warnings)


# -- telescoping identity ---------------------------------------------------


@dataclass(frozen=True)
class TelescopeSample:
    """Increments of ``log Z`` of both pruned formulas when the base pair
    gains its ``M``-th shared clause (``shared``) or one more private clause
    each (``private``), plus single-clause quotient checks."""

    shared: tuple[float, float]
    private: tuple[float, float]
    checks: int
    mismatches: int
    exceptions: int


def _quotient_check(base: Cnf, base_z: int, grown: Cnf, grown_z: int, clause: tuple[int, int], budget: int) -> tuple[int, int, int]:
    """(checks, mismatches, exceptions) for one clause addition."""
    expected = tuple(sorted(base.multiset() + (clause_key(clause),)))
    if grown.multiset() != expected:
        return 0, 0, 1
    quotient = Fraction(grown_z, base_z)
    ok = quotient == survival_probability_exact(base, clause, budget)
    return 1, 0 if ok else 1, 0


def telescope_sample(cfg: ExperimentConfig, i: int) -> TelescopeSample:
    m = cfg.clause_count
    M, j = divmod(i, cfg.trials)
    M += 1
    pair = sample_correlated_pair(cfg.n, M, m - M + 1, stream(cfg.seed, "telescope", M, j))
    base = pair.prefix(M - 1, m - M)
    with_shared = pair.prefix(M, m - M)
    with_private = pair.prefix(M - 1, m - M + 1)
    inc_s, inc_p = [], []
    checks = mismatches = exceptions = 0
    for h in (1, 2):
        b = prune(base.formula(h)).cnf
        s = prune(with_shared.formula(h)).cnf
        p = prune(with_private.formula(h)).cnf
        zb = count_models(b, budget=cfg.budget).count
        zs = count_models(s, budget=cfg.budget).count
        zp = count_models(p, budget=cfg.budget).count
        lb = math.log(zb)
        inc_s.append(math.log(zs) - lb)
        inc_p.append(math.log(zp) - lb)
        for grown, z, clause in ((s, zs, pair.shared[M - 1]), (p, zp, pair.private(h)[m - M])):
            c, mm, e = _quotient_check(b, zb, grown, z, clause, cfg.budget)
            checks += c
            mismatches += mm
            exceptions += e
    return TelescopeSample((inc_s[0], inc_s[1]), (inc_p[0], inc_p[1]), checks, mismatches, exceptions)


def direct_log_count(cfg: ExperimentConfig, i: int) -> float:
    cnf = sample_random_cnf(cfg.n, cfg.clause_count, stream(cfg.seed, "telescope-direct", i))
    return count_models(prune(cnf).cnf, budget=cfg.budget).log_value


@_timed
def cmd_telescope(cfg: ExperimentConfig) -> ExperimentReport:
    """Variance of ``log Z`` of the pruned formula two ways.

    Telescoped: ``sum_M E[A1 A2] - E[A'1 A'2]`` where ``A_h`` (``A'_h``) is
    the increment of ``log Z`` of the pruned ``h``-th formula of a
    correlated pair with ``M - 1`` shared and ``m - M`` private clauses when
    the ``M``-th shared clause (one further private clause each) is added.
    Direct: the sample variance over independent formulas.  ``trials`` is
    the number of pair samples per ``M``; ``direct_trials`` defaults to
    ``trials * m``.
    """
    m = cfg.clause_count
    samples = run_trials(telescope_sample, cfg, m * cfg.trials)
    per_m = []
    total = 0.0
    total_var = 0.0
    for M in range(1, m + 1):
        block = samples[(M - 1) * cfg.trials : M * cfg.trials]
        x = [s.shared[0] * s.shared[1] - s.private[0] * s.private[1] for s in block]
        dl = moments([s.shared[0] * s.shared[1] for s in block])
        dp = moments([s.private[0] * s.private[1] for s in block])
        acc = moments(x)
        per_m.append({"M": M, "delta": dl.mean, "delta_prime": dp.mean, "difference": acc.mean, "se": acc.sem if acc.n >= 2 else None})
        total += acc.mean
        total_var += acc.variance / acc.n if acc.n >= 2 else math.inf
    direct_n = cfg.direct_trials if cfg.direct_trials is not None else max(2, cfg.trials * m)
    direct = moments(run_trials(direct_log_count, cfg, direct_n))
    direct_se = direct.variance_se() if direct.n >= 4 else math.inf
    tele_se = math.sqrt(total_var) if m else 0.0
    combined = math.hypot(tele_se, direct_se)
    diff = total - direct.variance
    stats = {
        "m": m,
        "telescoped": total,
        "telescoped_se": tele_se,
        "direct": direct.variance,
        "direct_se": direct_se,
        "direct_trials": direct.n,
        "difference": diff,
        "combined_se": combined,
        "z": diff / combined if combined > 0 else 0.0,
        "per_m": per_m,
        "quotient_checks": sum(s.checks for s in samples),
        "quotient_mismatches": sum(s.mismatches for s in samples),
        "quotient_exceptions": sum(s.exceptions for s in samples),
    }
    warnings = ["single-clause quotient differs from the survival probability"] if stats["quotient_mismatches"] else []
    return ExperimentReport("telescope", cfg.to_dict(), stats, {}, warnings)


# -- population dynamics and the variance constant -------------------------


def _derived_path(cfg: ExperimentConfig, explicit: str | None, suffix: str) -> str | None:
    if explicit is not None:
        return explicit
    if cfg.out is None:
        return None
    out = Path(cfg.out)
    return str(out.with_name(out.stem + suffix))


@_timed
def cmd_popdyn(cfg: ExperimentConfig) -> ExperimentReport:
    """Iterate to the fixed point at ``(d, t)`` and write the population CSV."""
    pop = iterate_to_fixed_point(cfg.d, cfg.t, size=cfg.pop_size, tol=cfg.tol, max_iter=cfg.max_iter, seed=cfg.seed)
    pts = pop.points
    stats = {
        "iterations": pop.info.iteration,
        "converged": pop.info.converged,
        "distances": list(pop.info.distances),
        "second_moment": pop.second_moment(),
        "mean": pts.mean(axis=0).tolist(),
        "correlation": float(np.corrcoef(pts[:, 0], pts[:, 1])[0, 1]) if pts[:, 0].std() > 0 and pts[:, 1].std() > 0 else None,
    }
    warnings = [] if pop.info.converged else ["population dynamics hit max_iter before reaching tol"]
    report = ExperimentReport("popdyn", cfg.to_dict(), stats, {}, warnings)
    path = _derived_path(cfg, cfg.population_csv, ".population.csv")
    if path is not None:
        Path(path).write_text(pop.to_csv())
        report.files["population_csv"] = path
    return report


@_timed
def cmd_eta(cfg: ExperimentConfig) -> ExperimentReport:
    """``eta^2`` at ``d`` (or over the grid ``ds``), with the EtaResult JSON
    and a ``d,eta2,se,converged`` plot-data CSV."""
    grid = cfg.ds if cfg.ds else (cfg.d,)
    results = [_eta_for(cfg, d) for d in grid]
    rows = [{"d": r.d, "eta2": r.eta_squared, "se": r.se, "converged": r.converged} for r in results]
    warnings = [f"no convergence at some node for d={r.d!r}" for r in results if not r.converged]
    report = ExperimentReport("eta", cfg.to_dict(), {"grid": rows}, {}, warnings)
    eta_path = _derived_path(cfg, cfg.eta_json, ".eta.json")
    if eta_path is not None:
        Path(eta_path).write_text("[" + ",\n".join(r.to_json() for r in results) + "]\n")
        report.files["eta_json"] = eta_path
    grid_path = _derived_path(cfg, cfg.grid_csv, ".grid.csv")
    if grid_path is not None:
        Path(grid_path).write_text(grid_csv(results))
        report.files["grid_csv"] = grid_path
    return report


def grid_csv(results: Sequence[EtaResult]) -> str:
    lines = ["d,eta2,se,converged"]
    lines += [f"{r.d!r},{r.eta_squared!r},{r.se!r},{int(r.converged)}" for r in results]
    return "\n".join(lines) + "\n"


# -- satisfiability threshold ----------------------------------------------


THRESHOLD_DENSITIES = (1.5, 2.5)


def threshold_trial(cfg: ExperimentConfig, i: int) -> list[tuple[bool, int | None]]:
    out = []
    for k, d in enumerate(cfg.ds or THRESHOLD_DENSITIES):
        cnf = sample_random_cnf(cfg.n, clause_count_for_density(cfg.n, d), stream(cfg.seed, "threshold", k, i))
        sat = is_satisfiable(cnf)
        # closures grow with the giant implication component above d = 2
        conflicted = prune(cnf).conflicted_literals if d < 2 else None
        out.append((sat, conflicted))
    return out


@_timed
def cmd_threshold_sanity(cfg: ExperimentConfig) -> ExperimentReport:
    """Fraction of satisfiable formulas on both sides of ``d = 2``, and the
    mean number of literals whose propagation ends in a conflict below it."""
    densities = cfg.ds or THRESHOLD_DENSITIES
    trials = run_trials(threshold_trial, cfg, cfg.trials)
    rows = []
    for k, d in enumerate(densities):
        sat = [tr[k][0] for tr in trials]
        frac = float(np.mean(sat))
        row: dict[str, Any] = {
            "d": d,
            "sat_fraction": frac,
            "sat_fraction_se": math.sqrt(frac * (1 - frac) / len(sat)),
        }
        if d < 2:
            row["mean_conflicted_literals"] = float(np.mean([tr[k][1] for tr in trials]))
            row["n_pow_0_3"] = cfg.n**0.3
        rows.append(row)
    return ExperimentReport("threshold", cfg.to_dict(), {"densities": rows})


EXPERIMENTS: dict[str, Callable[[ExperimentConfig], ExperimentReport]] = {
    "variance": cmd_variance,
    "clt": cmd_clt,
    "prune-impact": cmd_prune_impact,
    "lwc": cmd_lwc,
    "gibbs": cmd_gibbs,
    "telescope": cmd_telescope,
    "popdyn": cmd_popdyn,
    "eta": cmd_eta,
    "threshold": cmd_threshold_sanity,
}
