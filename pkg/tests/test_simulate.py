import json
import math

import numpy as np
import pandas as pd
import pytest

import simulate
from criteria import CriterionKind
from errors import ConfigError, ExperimentError, PerfectFitError
from measure_full_rate import MEASURED_N, OUTPUT_CSV, REPLICATIONS, measure_full_rate
from model_core import AR1, CandidateModel, CorrelationSpec, TrueModelSpec
from settings import RIC_STAR_FULL_RATE_FLOORS
from simulate import (
    ExperimentConfig,
    MonteCarloScore,
    generate_design,
    replication_rng,
    run_experiment,
    sample_dgp,
    verify_identities,
)


def _small_config(**overrides):
    raw = {
        "beta0": [2.0, 0.0, 1.0],
        "n_values": [20, 40],
        "replications": 6,
        "criteria": ["bic", "ric_star", "aic"],
        "seed": 42,
    }
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


class TestRandomStreams:
    def test_same_key_same_stream(self):
        a = replication_rng(7, 3).standard_normal(5)
        b = replication_rng(7, 3).standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_are_distinct(self):
        a = replication_rng(7, 3).standard_normal(5)
        assert not np.array_equal(a, replication_rng(7, 4).standard_normal(5))
        assert not np.array_equal(a, replication_rng(7, 3, stream=simulate.DESIGN_STREAM).standard_normal(5))

    def test_sample_dgp_is_reproducible(self, sparse_truth):
        y1 = sample_dgp(sparse_truth, 50, seed=1, replication=9).y
        y2 = sample_dgp(sparse_truth, 50, seed=1, replication=9).y
        np.testing.assert_array_equal(y1, y2)

    def test_noiseless_limit(self, sparse_truth):
        tiny = TrueModelSpec(sparse_truth.beta0, 1e-20, CorrelationSpec(AR1, (0.5,)), sparse_truth.design)
        data = sample_dgp(tiny, 50, seed=1, replication=0)
        np.testing.assert_allclose(data.y, sparse_truth.mean, atol=1e-8)

    def test_correlated_noise_covariance(self):
        truth = TrueModelSpec(np.zeros(1), 2.0, CorrelationSpec(AR1, (0.7,)), np.ones((3, 1)))
        draws = np.array([sample_dgp(truth, 3, seed=4, replication=r).y for r in range(20_000)])
        cov = np.cov(draws.T)
        np.testing.assert_allclose(cov[0, 1] / 2.0, 0.7, atol=0.03)
        np.testing.assert_allclose(cov[0, 2] / 2.0, 0.49, atol=0.03)


class TestDesign:
    def test_nested_across_n(self):
        config = _small_config()
        np.testing.assert_array_equal(config.truth(20).design, config.truth(40).design[:20])

    def test_intercept_column(self):
        X = generate_design(10, 3, design_seed=5, intercept=True)
        np.testing.assert_array_equal(X[:, 0], np.ones(10))
        assert np.std(X[:, 1]) > 0


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig()
        assert config.p == 6
        assert config.truth().active_set == CandidateModel((1, 2, 5))
        assert len(config.candidates()) == 64

    def test_zero_replications(self):
        with pytest.raises(ConfigError, match="replications"):
            _small_config(replications=0)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            _small_config(reps=5)

    def test_n_too_small_for_max_k(self):
        with pytest.raises(ConfigError):
            _small_config(n_values=[5])

    def test_bad_seed(self):
        with pytest.raises(ConfigError):
            _small_config(seed=-1)
        with pytest.raises(ConfigError):
            _small_config(seed=1.5)

    def test_invalid_correlation(self):
        with pytest.raises(ConfigError):
            _small_config(correlation={"family": "exchangeable", "theta": [-0.2]})

    def test_json_round_trip(self, tmp_path):
        config = _small_config(correlation={"family": "ar1", "theta": [0.3]}, forced=[1])
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(config.to_dict()), encoding="utf-8")
        assert ExperimentConfig.from_json(path) == config

    def test_not_json(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("{beta0: [1]", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(path)


class TestRunExperiment:
    def test_single_replication_rates(self):
        summary = run_experiment(_small_config(replications=1), workers=1)
        rates = summary.rates
        assert len(rates) == 2 * 3
        for column in ("true_rate", "full_rate", "overfit_rate", "underfit_rate"):
            assert set(rates[column]).issubset({0.0, 1.0})
        assert (rates["replications"] == 1).all()

    def test_rates_are_consistent(self):
        summary = run_experiment(_small_config(), workers=1)
        rates = summary.rates
        total = rates["true_rate"] + rates["overfit_rate"] + rates["underfit_rate"] + rates["infeasible_rate"]
        np.testing.assert_allclose(total, 1.0)
        assert 0.0 <= summary.rate(40, CriterionKind.BIC, "true_rate") <= 1.0

    def test_worker_count_does_not_change_results(self):
        config = _small_config(replications=60)
        serial = run_experiment(config, workers=1).to_dict()
        parallel = run_experiment(config, workers=8).to_dict()
        assert json.dumps(serial) == json.dumps(parallel)

    def test_noiseless_recovery(self):
        config = ExperimentConfig.from_dict({"sigma0_sq": 1e-12, "n_values": [30], "replications": 20, "seed": 3})
        summary = run_experiment(config, workers=1)
        for kind in config.criteria:
            assert summary.rate(30, kind, "underfit_rate") == 0.0
            assert summary.rate(30, kind, "infeasible_rate") == 0.0

    def test_aborted_replication(self, monkeypatch):
        def broken(*args, **kwargs):
            raise PerfectFitError("exact fit")
        monkeypatch.setattr(simulate, "select", broken)
        with pytest.raises(ExperimentError) as info:
            run_experiment(_small_config(replications=2), workers=1)
        assert info.value.replication == 0

    @pytest.mark.slow
    def test_selection_consistency_and_pathology(self):
        config = ExperimentConfig()
        summary = run_experiment(config, workers=4)

        bic = [summary.rate(n, CriterionKind.BIC, "true_rate") for n in config.n_values]
        ric = [summary.rate(n, CriterionKind.RIC, "true_rate") for n in config.n_values]
        assert bic[0] < bic[1] < bic[2]
        assert all(a <= b for a, b in zip(ric, ric[1:]))
        aic_800 = summary.rate(800, CriterionKind.AIC, "true_rate")
        assert bic[2] > aic_800
        assert ric[2] > aic_800

        for n in config.n_values:
            star = summary.rate(n, CriterionKind.RIC_STAR, "full_rate")
            others = [summary.rate(n, kind, "full_rate") for kind in CriterionKind if kind != CriterionKind.RIC_STAR]
            assert star > max(others)
        for n, floor in RIC_STAR_FULL_RATE_FLOORS.items():
            assert summary.rate(n, CriterionKind.RIC_STAR, "full_rate") > floor


class TestVerifyIdentities:
    def _config(self, replications, **overrides):
        raw = {"beta0": [1.0, 1.0], "n_values": [20], "replications": replications, "seed": 7}
        raw.update(overrides)
        return ExperimentConfig.from_dict(raw)

    def test_targets_and_ks(self):
        summary = verify_identities(self._config(10_000))
        ids = {c.name: c for c in summary.identities}
        assert ids["chi2_ratio_mean"].target == pytest.approx(20.25)
        assert ids["quadform_mean"].target == pytest.approx(2.25)
        assert ids["chi2_ratio_mean"].relative_error < 0.02
        dists = {c.name: c for c in summary.distributions}
        assert dists["chi2_scaled_variance"].distribution == "chi2(18)"
        assert dists["f_statistic"].distribution == "F(2,18)"
        assert all(c.passed for c in summary.distributions)

    def test_known_correlated_w(self):
        summary = verify_identities(self._config(10_000, correlation={"family": "ar1", "theta": [0.6]}))
        ids = {c.name: c for c in summary.identities}
        assert ids["chi2_ratio_mean"].relative_error < 0.02
        assert all(c.passed for c in summary.distributions)

    def test_document_shape(self):
        out = verify_identities(self._config(500)).to_dict()
        assert {"config", "identities", "distributions"} <= set(out)
        assert out["identities"][0]["replications"] == 500

    def test_empty_model_zero_target(self):
        summary = verify_identities(self._config(200, beta0=[0.0, 0.0]), model=CandidateModel())
        ids = {c.name: c for c in summary.identities}
        assert ids["quadform_mean"].target == 0.0
        assert ids["quadform_mean"].relative_error == 0.0
        out = summary.to_dict()
        assert [d["name"] for d in out["distributions"]] == ["chi2_scaled_variance"]
        assert out["identities"][1]["relative_error"] == 0.0

    @pytest.mark.slow
    def test_moment_identities_at_full_scale(self):
        summary = verify_identities(self._config(100_000))
        ids = {c.name: c for c in summary.identities}
        assert ids["chi2_ratio_mean"].relative_error < 0.01
        assert ids["quadform_mean"].relative_error < 0.02


def test_monte_carlo_score_agreement():
    score = MonteCarloScore(mean=10.0, standard_error=0.1, replications=100)
    assert score.agrees_with(10.25)
    assert not score.agrees_with(10.4)


class TestMeasuredFloors:
    def test_recorded_rates_clear_floors(self):
        recorded = pd.read_csv(OUTPUT_CSV)
        assert set(recorded["n"]) == set(RIC_STAR_FULL_RATE_FLOORS)
        for n, floor in RIC_STAR_FULL_RATE_FLOORS.items():
            row = recorded[recorded["n"] == n].iloc[0]
            assert row["replications"] >= 300
            assert row["ric_star_full_rate"] > floor

    def test_measure_table_shape(self):
        df = measure_full_rate(replications=2, workers=1)
        assert list(df.columns) == ["n", "replications", "seed", "ric_star_full_rate"]
        assert list(df["n"]) == list(MEASURED_N)
        assert (df["replications"] == 2).all()

    @pytest.mark.slow
    @pytest.mark.parametrize("n", sorted(RIC_STAR_FULL_RATE_FLOORS))
    def test_full_rate_against_recorded(self, n):
        recorded = pd.read_csv(OUTPUT_CSV).set_index("n")
        config = ExperimentConfig(replications=REPLICATIONS, criteria=(CriterionKind.RIC_STAR,))
        rate = run_experiment(config, workers=4).rate(n, CriterionKind.RIC_STAR, "full_rate")
        assert rate > RIC_STAR_FULL_RATE_FLOORS[n]
        # 独立な 2 つの推定の差として 3 SE
        recorded_rate = float(recorded.loc[n, "ric_star_full_rate"])
        se = math.sqrt(2.0 * recorded_rate * (1.0 - recorded_rate) / REPLICATIONS)
        assert abs(rate - recorded_rate) <= 3.0 * se
