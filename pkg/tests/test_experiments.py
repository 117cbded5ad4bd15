from __future__ import annotations

import json
import math

import numpy as np
import pytest

from satclt.experiments import (
    ConfigError,
    ExperimentConfig,
    cmd_clt,
    cmd_eta,
    cmd_gibbs,
    cmd_lwc,
    cmd_popdyn,
    cmd_prune_impact,
    cmd_telescope,
    cmd_threshold_sanity,
    cmd_variance,
    clt_statistics,
    lwc_clause_counts,
    round_half_up,
)
from satclt.rng import stream
from satclt.stats import ks_normal
from scipy import stats as sps

ETA2_D1 = 0.0174  # reference value, only used where the ratio is not asserted


def test_config_validation():
    for bad in ({"d": 0}, {"n": 1}, {"trials": 0}, {"t": 1.5}, {"quad_k": 4}, {"workers": 0}):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("# comment\nd = 1.5\nn=300  # inline\npop-size = 10\nds = 0.5, 1.0\nself_test = yes\n")
    cfg = ExperimentConfig.from_file(path)
    assert (cfg.d, cfg.n, cfg.pop_size, cfg.ds, cfg.self_test) == (1.5, 300, 10, (0.5, 1.0), True)
    cfg2 = ExperimentConfig.from_mapping({"n": "40"}, cfg)
    assert cfg2.n == 40 and cfg2.d == 1.5
    path.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(path)
    path.write_text("n = many\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(path)
    path.write_text("n 5\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_file(path)


def test_rounding_helpers():
    assert round_half_up(2.5) == 3 and round_half_up(1.5) == 2
    assert lwc_clause_counts(100_000, 1.0, 0.5) == (25_000, 25_000)
    assert lwc_clause_counts(10, 1.0, 0.5) == (3, 3)


def test_variance_report_is_reproducible_and_worker_independent():
    cfg = ExperimentConfig(d=1.0, n=150, trials=40, seed=3, eta2=ETA2_D1)
    a = cmd_variance(cfg).to_json()
    b = cmd_variance(cfg).to_json()
    c = cmd_variance(cfg.replace(workers=2)).to_json()
    assert a == b
    assert json.loads(a)["statistics"] == json.loads(c)["statistics"]
    rep = json.loads(a)
    assert set(rep) == {"experiment", "config", "statistics", "excluded", "warnings", "files", "version"}
    assert rep["statistics"]["sample_variance"] >= 0
    assert "runtime" in json.loads(cmd_variance(cfg).to_json(include_runtime=True))


def test_single_trial_is_degenerate():
    rep = cmd_variance(ExperimentConfig(n=50, trials=1, eta2=ETA2_D1))
    assert rep.statistics["sample_variance"] == 0.0
    assert any("degenerate" in w for w in rep.warnings)


def test_budget_exclusions_are_counted():
    rep = cmd_variance(ExperimentConfig(d=1.9, n=400, trials=6, budget=1, eta2=ETA2_D1))
    assert rep.excluded["budget_exceeded"] + rep.statistics["count"] == 6
    assert rep.excluded["budget_exceeded"] > 0


def test_clt_report_fields():
    rep = cmd_clt(ExperimentConfig(n=20, trials=30))
    s = rep.statistics
    assert 0 <= s["ks_distance"] <= 1 and 0 <= s["p_value"] <= 1
    assert "skewness" in s and "excess_kurtosis" in s


def test_clt_self_test_pvalues_are_uniform():
    pvals = [
        cmd_clt(ExperimentConfig(trials=400, seed=s, self_test=True)).statistics["p_value"] for s in range(150)
    ]
    # p-values of a calibrated test are uniform on (0, 1): compare the
    # probit of the p-values with N(0, 1) using the package's own KS
    u = np.clip(np.array(pvals), 1e-12, 1 - 1e-12)
    assert ks_normal(sps.norm.ppf(u)).pvalue > 0.001
    assert abs(np.mean(u) - 0.5) < 4 * math.sqrt(1 / 12 / len(u))


def test_calibrated_pvalue_for_standardized_normal_data():
    pvals = [
        clt_statistics(stream(s, "std").standard_normal(300).tolist(), 0.01, seed=s)[0]["p_value_calibrated"]
        for s in range(60)
    ]
    assert abs(np.mean(pvals) - 0.5) < 4 * math.sqrt(1 / 12 / 60)


def test_prune_impact_nonnegative():
    rep = cmd_prune_impact(ExperimentConfig(d=1.5, n=60, trials=60))
    s = rep.statistics
    assert s["negative"] == 0 and s["bound_violations"] == 0
    assert s["count"] + rep.excluded["budget_exceeded"] == 60
    with pytest.raises(ConfigError):
        cmd_prune_impact(ExperimentConfig(d=2.1, n=60, trials=2))


def test_prune_impact_zero_without_pruning():
    rep = cmd_prune_impact(ExperimentConfig(d=0.05, n=40, trials=10))
    assert rep.statistics["max"] == 0.0 and rep.statistics["zero_fraction"] == 1.0


def test_lwc_ell_zero_is_exact():
    rep = cmd_lwc(ExperimentConfig(d=1.0, n=300, t=0.7, ell=0, tree_samples=100))
    assert rep.statistics["keys"][0]["key"] == "(S)"
    assert rep.statistics["keys"][0]["instance_frequency"] == 1.0
    assert rep.statistics["max_deviation"] == 0.0
    with pytest.raises(ConfigError):
        cmd_lwc(ExperimentConfig(ell=3))


def test_lwc_t_one_has_no_distinct_children():
    rep = cmd_lwc(ExperimentConfig(d=1.0, n=20_000, t=1.0, ell=1, tree_samples=50_000))
    for row in rep.statistics["keys"]:
        assert "1" not in row["key"] and "2" not in row["key"]
    assert rep.statistics["max_deviation"] < 0.01


def test_gibbs_depth_zero_and_weak_coupling():
    rep = cmd_gibbs(ExperimentConfig(d=1.0, trials=20, ells=(0,), ts=(0.5,)))
    assert rep.statistics["curves"]["ell=0,t=0.5,h=1"]["mean"] == 0.0
    weak = cmd_gibbs(ExperimentConfig(d=0.2, trials=400, ells=(1,), ts=(0.5,)))
    assert weak.statistics["curves"]["ell=1,t=0.5,h=1"]["mean"] < 0.06


def test_telescope_with_no_clauses():
    rep = cmd_telescope(ExperimentConfig(n=10, m=0, trials=5))
    assert rep.statistics["telescoped"] == 0.0 and rep.statistics["direct"] == 0.0


def test_telescope_quotient_identity_small():
    rep = cmd_telescope(ExperimentConfig(n=16, d=1.0, trials=30, direct_trials=400))
    s = rep.statistics
    assert s["quotient_checks"] > 0 and s["quotient_mismatches"] == 0
    assert abs(s["z"]) < 4


def test_popdyn_writes_identical_csv(tmp_path):
    cfg = ExperimentConfig(d=1.0, t=0.5, pop_size=500, seed=2, out=str(tmp_path / "r.json"))
    rep = cmd_popdyn(cfg)
    first = (tmp_path / "r.population.csv").read_text()
    cmd_popdyn(cfg)
    assert (tmp_path / "r.population.csv").read_text() == first
    assert rep.files["population_csv"].endswith("r.population.csv")
    assert rep.statistics["converged"]


def test_eta_grid_csv(tmp_path):
    cfg = ExperimentConfig(
        ds=(0.3, 1.0, 1.6), pop_size=3000, quad_k=5, samples=100_000, out=str(tmp_path / "e.json")
    )
    rep = cmd_eta(cfg)
    lines = (tmp_path / "e.grid.csv").read_text().splitlines()
    assert lines[0] == "d,eta2,se,converged"
    eta = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(math.isfinite(e) and e > 0 for e in eta)
    assert eta[0] < eta[1] < eta[2]
    blobs = json.loads((tmp_path / "e.eta.json").read_text())
    assert [b["d"] for b in blobs] == [0.3, 1.0, 1.6]
    assert len(rep.statistics["grid"]) == 3


def test_threshold_small():
    rep = cmd_threshold_sanity(ExperimentConfig(n=2000, trials=20, ds=(1.0, 3.0)))
    rows = rep.statistics["densities"]
    assert rows[0]["sat_fraction"] == 1.0 and rows[1]["sat_fraction"] == 0.0
    assert "mean_conflicted_literals" in rows[0] and "mean_conflicted_literals" not in rows[1]
