import json

import numpy as np
import pytest

from survstack.exceptions import ConfigError
from survstack.sim_bench import (calibrate_censoring, censoring_fraction, check_orderings,
                                 gen_covariates, gen_event_times, isse_time_grid,
                                 linear_predictor, run_scenario, scenario, simulate_dataset,
                                 true_survival, write_csv, write_json)
from survstack.stacker import CandidateSpec


class TestCovariates:
    def test_independent_when_rho_zero(self):
        x = gen_covariates(10_000, 4, 0.0, np.random.default_rng(0))
        r = np.corrcoef(x, rowvar=False)
        assert np.all(np.abs(np.diag(r, 1)) < 0.1)

    def test_ar1_moments(self):
        n = 100_000
        x = gen_covariates(n, 8, 0.4, np.random.default_rng(1))
        cov = np.cov(x, rowvar=False)
        assert abs(cov[0, 1] - 0.4) < 0.01
        assert abs(cov[0, 2] - 0.16) < 0.01
        assert np.all(np.abs(x.mean(axis=0)) < 3 / np.sqrt(n))


class TestEventTimes:
    def test_lognormal_median(self):
        cfg = scenario("lognormal", "linear", beta=(0.0,) * 8)
        t = gen_event_times(np.zeros((100_000, 8)), cfg, np.random.default_rng(2))
        assert abs(np.median(t) - 1.0) < 0.01

    def test_gamma_mean(self):
        cfg = scenario("gamma", "linear", beta=(0.0,) * 8)
        t = gen_event_times(np.zeros((100_000, 8)), cfg, np.random.default_rng(3))
        assert abs(t.mean() / 1.25 - 1) < 0.02

    def test_nonlinear_effect_range(self):
        cfg = scenario("weibull", "nonlinear", beta=(1.0,) + (0.0,) * 7)
        x = np.random.default_rng(4).standard_normal((1000, 8)) * 0.1
        eta = linear_predictor(x, cfg)
        assert np.all((eta > 0) & (eta < 1))

    @pytest.mark.parametrize("family", ["lognormal", "weibull", "gamma"])
    def test_true_survival_matches_empirical(self, family):
        cfg = scenario(family, "linear")
        rng = np.random.default_rng(5)
        x = np.tile(rng.standard_normal((1, 8)), (1_000_000, 1))
        t = gen_event_times(x, cfg, rng)
        probe = np.quantile(t, [0.1, 0.3, 0.5, 0.7, 0.9])
        emp = (t[:, None] > probe[None, :]).mean(axis=0)
        truth = true_survival(linear_predictor(x[:1], cfg), probe, family)[0]
        np.testing.assert_allclose(truth, emp, atol=0.005)


class TestCalibration:
    def test_fraction_decreases_with_bound(self):
        t = np.random.default_rng(0).lognormal(size=10_000)
        f = [censoring_fraction(t, c) for c in (0.5, 2.0, 8.0)]
        assert f[0] > f[1] > f[2]

    def test_achieved_rate(self):
        cfg = scenario("lognormal", "linear")
        c = calibrate_censoring(cfg)
        rng = np.random.default_rng(7)
        x = gen_covariates(1_000_000, 8, 0.4, rng)
        t = gen_event_times(x, cfg, rng)
        achieved = np.mean(rng.uniform(0, c, t.size) < t)
        assert abs(achieved - 0.25) < 0.01

    def test_weibull_linear_fresh_sample(self):
        cfg = scenario("weibull", "linear", n=100_000)
        c = calibrate_censoring(cfg)
        data, _, _ = simulate_dataset(cfg, c, np.random.default_rng(8))
        assert 0.24 <= 1 - data.event_indicator.mean() <= 0.26

    def test_isse_grid(self):
        cfg = scenario("gamma", "nonlinear")
        c = calibrate_censoring(cfg)
        grid = isse_time_grid(cfg, c)
        assert grid.shape == (19,) and np.all(np.diff(grid) > 0)
        assert grid[-1] < c


def test_config_validation():
    with pytest.raises(ConfigError):
        scenario("exponential", "linear")
    with pytest.raises(ConfigError):
        scenario("weibull", "linear", target_censoring=1.0)


@pytest.fixture(scope="module")
def tiny_runs():
    specs = [CandidateSpec("lognormal", "lognormal"), CandidateSpec("cox", "cox"),
             CandidateSpec("rsf", "rsf", {"n_trees": 20})]
    cfg = scenario("lognormal", "linear", replicates=4, n=120)
    return cfg, specs, run_scenario(cfg, specs, workers=1), run_scenario(cfg, specs, workers=2)


def test_results_independent_of_workers(tiny_runs):
    _, _, one, two = tiny_runs
    np.testing.assert_array_equal(one.isse, two.isse)
    np.testing.assert_array_equal(one.alpha, two.alpha)
    assert one.cv_selected == two.cv_selected


def test_scenario_result_contents(tiny_runs, tmp_path):
    cfg, specs, res, _ = tiny_runs
    assert res.estimators == ["lognormal", "cox", "rsf", "stacking", "cv"]
    assert res.isse.shape == (4, 5) and np.all(res.isse >= 0)
    np.testing.assert_allclose(res.alpha.sum(axis=1), 1.0, atol=1e-10)
    cv_col = [res.isse[r, res.estimators.index(sel)] for r, sel in enumerate(res.cv_selected)]
    np.testing.assert_array_equal(res.isse[:, -1], cv_col)

    checks = check_orderings([res])
    assert {name for name, _, _ in checks} >= {"lognormal-linear: stacking <= cv",
                                               "lognormal-linear: rsf is worst single"}
    write_csv([res], tmp_path / "out.csv")
    write_json([res], tmp_path / "out.json", checks)
    assert (tmp_path / "out.csv").read_text().count("\n") == 6
    payload = json.loads((tmp_path / "out.json").read_text())
    assert payload["scenarios"][0]["replicates_ok"] == 4
    assert len(payload["checks"]) == len(checks)
