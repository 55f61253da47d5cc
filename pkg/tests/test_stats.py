import math

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import kstest

from treepolymer import disorder, stats
from treepolymer.cascade import WeightOracle, martingale_series
from treepolymer.errors import ConfigError, RegimeError
from treepolymer.stats import (EnsembleConfig, clt_report, dichotomy_report,
                               ks_statistic, median_log_z_slope, run_ensemble,
                               seneta_heyde_report, standard_normal_cdf,
                               variance_report)

BETA_C = disorder.critical_beta()


class TestEnsembleConfig:
    def test_seeds_distinct(self):
        cfg = EnsembleConfig(disorder.deterministic(), 4, 1000, base_seed=9)
        seeds = {cfg.seed_for(i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_validation(self):
        with pytest.raises(ConfigError):
            EnsembleConfig(disorder.deterministic(), 0, 10, 1)
        with pytest.raises(ConfigError):
            EnsembleConfig(disorder.deterministic(), 4, 0, 1)

    def test_json_embeds_everything(self):
        cfg = EnsembleConfig(disorder.lognormal(1.2), 8, 50, base_seed=3)
        d = cfg.to_json_dict()
        assert d["spec"] == {"kind": "lognormal", "beta": 1.2}
        assert (d["depth"], d["replicates"], d["base_seed"]) == (8, 50, 3)


class TestRunEnsemble:
    def test_single_replicate_equals_series(self):
        cfg = EnsembleConfig(disorder.lognormal(BETA_C), 8, 1, base_seed=5)
        s = run_ensemble(cfg)
        series = martingale_series(WeightOracle(cfg.spec, cfg.seed_for(0)), 8)
        np.testing.assert_array_equal(s.z_mean, series.z)
        np.testing.assert_array_equal(s.d_mean, series.d)
        np.testing.assert_array_equal(s.z_quantiles[:, 2], series.z)
        assert np.all(s.z_stderr == 0.0)

    def test_deterministic_all_quantiles_one(self):
        cfg = EnsembleConfig(disorder.deterministic(), 6, 25, base_seed=0)
        s = run_ensemble(cfg)
        assert np.allclose(s.z_quantiles, 1.0, rtol=1e-13)
        assert np.all(s.invalid == 0)

    def test_rerun_and_jobs_bit_identical(self):
        cfg = EnsembleConfig(disorder.lognormal(BETA_C), 10, 16, base_seed=2)
        a = run_ensemble(cfg, jobs=1)
        b = run_ensemble(cfg, jobs=4)
        c = run_ensemble(cfg, jobs=1)
        for x, y in ((a, b), (a, c)):
            np.testing.assert_array_equal(x.z_quantiles, y.z_quantiles)
            np.testing.assert_array_equal(x.d_quantiles, y.d_quantiles)
            np.testing.assert_array_equal(x.median_log_z, y.median_log_z)

    def test_quantiles_monotone_in_level(self):
        cfg = EnsembleConfig(disorder.lognormal(1.5 * BETA_C), 10, 40, base_seed=4)
        s = run_ensemble(cfg)
        assert np.all(np.diff(s.z_quantiles, axis=1) >= 0)
        assert np.all(np.diff(s.d_quantiles, axis=1) >= 0)

    def test_invalid_counts(self):
        cfg = EnsembleConfig(disorder.lognormal(BETA_C), 10, 60, base_seed=6)
        s = run_ensemble(cfg)
        assert np.all(s.ratio_valid + s.invalid == 60)
        assert np.all(s.ratio_valid > 0)


class TestDichotomy:
    def test_deterministic_slope_zero(self):
        cfg = EnsembleConfig(disorder.deterministic(), 10, 5, base_seed=1)
        s = run_ensemble(cfg)
        assert median_log_z_slope(s) == pytest.approx(0.0, abs=1e-13)

    def test_weak_vs_strong_ordering(self):
        weak = run_ensemble(EnsembleConfig(disorder.lognormal(0.5 * BETA_C), 14, 60, 1))
        strong = run_ensemble(EnsembleConfig(disorder.lognormal(1.5 * BETA_C), 14, 60, 1))
        rep = dichotomy_report(weak, strong)
        assert rep.ordered
        assert rep.slope_strong < -0.05
        assert rep.slope_weak > rep.slope_strong

    def test_requires_matching_shapes(self):
        a = run_ensemble(EnsembleConfig(disorder.deterministic(), 6, 5, 1))
        b = run_ensemble(EnsembleConfig(disorder.deterministic(), 7, 5, 1))
        with pytest.raises(ConfigError):
            dichotomy_report(a, b)

    def test_report_serializes(self):
        a = run_ensemble(EnsembleConfig(disorder.deterministic(), 6, 5, 1))
        rep = dichotomy_report(a, a)
        d = rep.to_json_dict()
        assert d["schema_version"] == 1
        assert d["weak_config"]["depth"] == 6


class TestSenetaHeyde:
    def test_requires_critical(self):
        cfg = EnsembleConfig(disorder.lognormal(0.9 * BETA_C), 8, 10, 1)
        with pytest.raises(RegimeError):
            seneta_heyde_report(cfg)

    def test_report_contents(self):
        cfg = EnsembleConfig(disorder.lognormal(BETA_C), 12, 50, base_seed=7)
        rep = seneta_heyde_report(cfg)
        assert rep.target == pytest.approx(0.6777, abs=1e-4)
        assert np.all(rep.valid_fraction > 0)
        assert np.all(rep.valid_fraction <= 1)
        med = rep.ratio_median[~np.isnan(rep.ratio_median)]
        assert np.all(med > 0)
        assert np.array_equal(rep.abs_gap, np.abs(rep.ratio_median - rep.target),
                              equal_nan=True)


class TestKsStatistic:
    def test_dkw_bound_on_true_samples(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=100_000)
        ks = ks_statistic(x, standard_normal_cdf)
        # DKW: P(KS > eps) <= 2 exp(-2 n eps^2); alpha = 0.001
        bound = math.sqrt(math.log(2 / 0.001) / (2 * 100_000))
        assert ks < bound

    def test_constant_sample(self):
        x0 = 0.7
        ks = ks_statistic([x0] * 10, standard_normal_cdf)
        f = float(ndtr(x0))
        assert ks == pytest.approx(max(f, 1 - f), rel=1e-12)

    def test_identical_sets_identical_statistic(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=1000)
        assert ks_statistic(x, standard_normal_cdf) == ks_statistic(
            x.copy(), standard_normal_cdf)

    def test_matches_scipy(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=5000)
        ours = ks_statistic(x, lambda t: np.clip(t, 0, 1))
        theirs = kstest(x, "uniform").statistic
        assert ours == pytest.approx(theirs, rel=1e-12)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            ks_statistic([1.0], standard_normal_cdf)


class TestCltReport:
    def test_requires_weak(self):
        with pytest.raises(RegimeError):
            clt_report(disorder.lognormal(2 * BETA_C), 10, 2, 100, 1)
        with pytest.raises(RegimeError):
            clt_report(disorder.lognormal(BETA_C), 10, 2, 100, 1)

    def test_deterministic_control_runs(self):
        rep = clt_report(disorder.deterministic(), 16, 3, 20_000, base_seed=1)
        assert rep.ks_per_env.shape == (3,)
        # lattice discreteness bounds the distance near half the central pmf
        assert 0.05 < rep.median_ks < 0.15
        assert rep.to_json_dict()["config"]["depth"] == 16

    def test_reproducible(self):
        a = clt_report(disorder.deterministic(), 12, 2, 5000, base_seed=3)
        b = clt_report(disorder.deterministic(), 12, 2, 5000, base_seed=3)
        assert np.array_equal(a.ks_per_env, b.ks_per_env)

    def test_improves_with_depth_for_control(self):
        shallow = clt_report(disorder.deterministic(), 8, 2, 50_000, base_seed=1)
        deep = clt_report(disorder.deterministic(), 22, 2, 50_000, base_seed=1)
        assert deep.median_ks < shallow.median_ks


class TestVarianceReport:
    def test_deterministic_control(self):
        rep = variance_report(disorder.deterministic(), 14, 4, 40_000, base_seed=2)
        assert rep.target == 1.0
        # simple-walk endpoint variance: exact value n, so var/n near 1
        se = rep.variance_per_env.std(ddof=1) / 2.0
        assert abs(rep.median_variance - 1.0) < max(5 * se, 0.05)

    def test_strong_target(self):
        rep = variance_report(disorder.lognormal(2 * BETA_C), 12, 2, 5000, base_seed=2)
        assert rep.target == pytest.approx(0.75, rel=1e-15)
        assert rep.gap == pytest.approx(rep.median_variance - 0.75, rel=1e-12)

    def test_rejects_weak_lognormal_and_twopoint(self):
        with pytest.raises(RegimeError):
            variance_report(disorder.lognormal(0.5 * BETA_C), 10, 2, 100, 1)
        with pytest.raises(RegimeError):
            variance_report(disorder.two_point(0.3, 0.4), 10, 2, 100, 1)


def test_summary_serialization_round_trip_shape():
    cfg = EnsembleConfig(disorder.lognormal(BETA_C), 6, 8, base_seed=11)
    s = run_ensemble(cfg)
    d = s.to_json_dict()
    assert d["config"]["base_seed"] == 11
    assert len(d["depths"]) == 6
    assert len(d["z_quantiles"][0]) == 5
    text = s.to_csv_text("cfg")
    lines = text.strip().split("\n")
    assert lines[3].startswith("depth,")
    assert len(lines) == 4 + 6
