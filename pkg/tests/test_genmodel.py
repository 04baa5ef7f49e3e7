"""Tests for the generative simulator, drift estimates, and experiments."""

import csv
import math

import numpy as np
import pytest

from cges.errors import ConfigurationError
from cges.genmodel import (
    Beta,
    Dirichlet,
    DriftMethod,
    IdealGenConfig,
    PointMass,
    PointSimplex,
    RealisticGenConfig,
    Uniform,
    concentration_experiment,
    drift,
    parse_scalar_law,
    parse_simplex_law,
    sample_ideal,
    sample_realistic,
    write_concentration_csv,
)

# closed-form drifts for the point-mass configurations used below
IDEAL_DRIFT_07_K2 = (0.7 - 0.3) * math.log(0.7 / 0.3)  # 0.33891914415488136
REALISTIC_DRIFT_MINORITY = (0.4 - 0.6) * math.log(0.3 / 0.7)  # +0.16945957207744068


class TestLaws:
    def test_point_mass_bounds(self):
        with pytest.raises(ConfigurationError):
            PointMass(0.0)
        with pytest.raises(ConfigurationError):
            PointMass(1.0)

    def test_uniform_bounds(self):
        with pytest.raises(ConfigurationError):
            Uniform(0.9, 0.5)

    def test_beta_bounds(self):
        with pytest.raises(ConfigurationError):
            Beta(0.0, 1.0)

    def test_point_simplex_must_normalize(self):
        with pytest.raises(ConfigurationError):
            PointSimplex((0.5, 0.6))

    def test_dirichlet_positive(self):
        with pytest.raises(ConfigurationError):
            Dirichlet((1.0, 0.0))

    def test_parse_scalar_law(self):
        assert parse_scalar_law("point:0.7") == PointMass(0.7)
        assert parse_scalar_law("uniform:0.55,0.95") == Uniform(0.55, 0.95)
        assert parse_scalar_law("beta:2,5") == Beta(2.0, 5.0)
        with pytest.raises(ConfigurationError):
            parse_scalar_law("gauss:0,1")

    def test_parse_simplex_law(self):
        assert parse_simplex_law("point:0.4,0.6") == PointSimplex((0.4, 0.6))
        assert parse_simplex_law("dirichlet:1,1,1") == Dirichlet((1.0, 1.0, 1.0))
        with pytest.raises(ConfigurationError):
            parse_simplex_law("point:1.0")

    def test_answer_law_dimension_checked(self):
        with pytest.raises(ConfigurationError):
            RealisticGenConfig(
                k=3, answer_law=PointSimplex((0.4, 0.6)), confidence_noise=PointMass(0.5)
            )


class TestSampleIdeal:
    def test_seed_determinism(self):
        config = IdealGenConfig(k=3, confidence_law=Uniform(0.3, 0.9), seed=5)
        a = sample_ideal(config, 50, np.random.default_rng(123))
        b = sample_ideal(config, 50, np.random.default_rng(123))
        assert a.true_index == b.true_index
        assert a.samples == b.samples
        assert np.array_equal(a.posterior_path, b.posterior_path)
        for j in a.llr_paths:
            assert np.array_equal(a.llr_paths[j], b.llr_paths[j])

    def test_emission_calibration_at_point_mass(self):
        # responses equal the true answer with frequency close to c
        config = IdealGenConfig(k=4, confidence_law=PointMass(0.7))
        rng = np.random.default_rng(0)
        hits = total = 0
        for _ in range(60):
            trace = sample_ideal(config, 100, rng)
            hits += sum(s.label == trace.true_index for s in trace.samples)
            total += len(trace.samples)
        freq = hits / total
        # 6000 Bernoulli(0.7) draws: 5 sigma is ~0.030
        assert abs(freq - 0.7) < 0.03

    def test_uninformative_point_mass_keeps_posterior_flat(self):
        config = IdealGenConfig(k=4, confidence_law=PointMass(0.25))
        trace = sample_ideal(config, 30, np.random.default_rng(1))
        assert np.allclose(trace.posterior_path, 0.25, atol=1e-9)
        for path in trace.llr_paths.values():
            assert np.allclose(path, 0.0, atol=1e-9)

    def test_cumulative_llr_mean_matches_drift(self):
        config = IdealGenConfig(k=2, confidence_law=PointMass(0.7))
        rng = np.random.default_rng(2)
        m, trials = 100, 400
        finals = []
        for _ in range(trials):
            trace = sample_ideal(config, m, rng)
            competitor = next(iter(trace.llr_paths))
            finals.append(trace.llr_paths[competitor][-1])
        expected = m * IDEAL_DRIFT_07_K2  # ~33.89
        std_err = np.std(finals, ddof=1) / math.sqrt(trials)
        assert abs(np.mean(finals) - expected) < 4 * std_err

    def test_m_bounds_enforced(self):
        config = IdealGenConfig(k=2, confidence_law=PointMass(0.7), m_max=10)
        with pytest.raises(ConfigurationError):
            sample_ideal(config, 11, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            sample_ideal(config, 0, np.random.default_rng(0))


class TestSampleRealistic:
    def test_truth_is_index_zero(self):
        config = RealisticGenConfig(
            k=2, answer_law=PointSimplex((0.4, 0.6)), confidence_noise=PointMass(0.3)
        )
        trace = sample_realistic(config, 20, np.random.default_rng(3))
        assert trace.true_index == 0
        assert set(trace.llr_paths) == {1}

    def test_answer_frequencies_follow_p(self):
        config = RealisticGenConfig(
            k=3,
            answer_law=PointSimplex((0.2, 0.5, 0.3)),
            confidence_noise=Uniform(0.4, 0.6),
        )
        rng = np.random.default_rng(4)
        counts = np.zeros(3)
        for _ in range(40):
            trace = sample_realistic(config, 100, rng)
            for sample in trace.samples:
                counts[sample.label] += 1
        freqs = counts / counts.sum()
        assert np.allclose(freqs, [0.2, 0.5, 0.3], atol=0.03)

    def test_callable_confidence_noise(self):
        def noise(probs, rng):
            return float(np.clip(probs[0] + rng.normal(0, 0.01), 0.05, 0.95))

        config = RealisticGenConfig(
            k=2, answer_law=PointSimplex((0.6, 0.4)), confidence_noise=noise
        )
        trace = sample_realistic(config, 50, np.random.default_rng(5))
        confidences = [s.confidence for s in trace.samples]
        assert all(0.0 < c < 1.0 for c in confidences)
        assert abs(np.mean(confidences) - 0.6) < 0.02


class TestPathIdentity:
    def test_posterior_ratio_equals_exp_llr(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            k = int(rng.integers(2, 6))
            config = IdealGenConfig(k=k, confidence_law=Uniform(0.2, 0.9), seed=0)
            trace = sample_ideal(config, 40, rng)
            truth = trace.true_index
            for j, path in trace.llr_paths.items():
                ratio = trace.posterior_path[:, truth] / trace.posterior_path[:, j]
                assert np.allclose(ratio, np.exp(path), rtol=1e-9)


class TestDrift:
    def test_ideal_closed_form(self):
        config = IdealGenConfig(k=2, confidence_law=PointMass(0.7))
        estimate = drift(config)
        assert estimate.method is DriftMethod.CLOSED_FORM
        assert estimate.mu[1] == pytest.approx(IDEAL_DRIFT_07_K2, abs=1e-15)

    def test_realistic_closed_form_signs(self):
        minority = RealisticGenConfig(
            k=2, answer_law=PointSimplex((0.4, 0.6)), confidence_noise=PointMass(0.3)
        )
        converse = RealisticGenConfig(
            k=2, answer_law=PointSimplex((0.4, 0.6)), confidence_noise=PointMass(0.7)
        )
        assert drift(minority).mu[1] == pytest.approx(REALISTIC_DRIFT_MINORITY, abs=1e-15)
        assert drift(converse).mu[1] == pytest.approx(-REALISTIC_DRIFT_MINORITY, abs=1e-15)

    def test_uninformative_confidence_has_zero_drift(self):
        config = IdealGenConfig(k=4, confidence_law=PointMass(0.25))
        assert drift(config).mu[1] == pytest.approx(0.0, abs=1e-15)

    def test_monte_carlo_agrees_with_closed_form(self):
        config = IdealGenConfig(k=2, confidence_law=PointMass(0.7), seed=9)
        mc = drift(config, n_mc=40_000, method=DriftMethod.MONTE_CARLO)
        assert mc.method is DriftMethod.MONTE_CARLO
        assert abs(mc.mu[1] - IDEAL_DRIFT_07_K2) < 3 * mc.std_err[1]

    def test_monte_carlo_realistic_agrees_with_closed_form(self):
        config = RealisticGenConfig(
            k=2,
            answer_law=PointSimplex((0.4, 0.6)),
            confidence_noise=PointMass(0.3),
            seed=10,
        )
        mc = drift(config, n_mc=40_000, method=DriftMethod.MONTE_CARLO)
        assert abs(mc.mu[1] - REALISTIC_DRIFT_MINORITY) < 3 * mc.std_err[1]

    def test_closed_form_requires_point_laws(self):
        config = IdealGenConfig(k=2, confidence_law=Uniform(0.5, 0.9))
        with pytest.raises(ConfigurationError):
            drift(config, method=DriftMethod.CLOSED_FORM)
        assert drift(config, n_mc=100).method is DriftMethod.MONTE_CARLO


class TestConcentrationExperiment:
    def test_success_grows_with_m_for_informative_law(self):
        config = IdealGenConfig(k=3, confidence_law=Uniform(0.5, 0.9), seed=1)
        rows = concentration_experiment(config, [1, 8, 40], trials=150, drift_n_mc=2000)
        assert [row.m for row in rows] == [1, 8, 40]
        assert rows[-1].success_freq >= rows[0].success_freq
        assert rows[-1].success_freq > 0.95
        assert all(row.trials == 150 for row in rows)

    def test_single_round_row_matches_direct_average(self):
        config = IdealGenConfig(k=2, confidence_law=Uniform(0.4, 0.8), seed=2)
        rows = concentration_experiment(config, [1], trials=64, drift_n_mc=100)
        masses = []
        for trial in range(64):
            rng = np.random.default_rng([config.seed, 1, trial])
            trace = sample_ideal(config, 1, rng)
            masses.append(trace.posterior_path[-1, trace.true_index])
        assert rows[0].mean_mass_truth == pytest.approx(float(np.mean(masses)), rel=1e-12)

    def test_rows_are_order_independent(self):
        config = IdealGenConfig(k=2, confidence_law=Uniform(0.4, 0.8), seed=3)
        forward = concentration_experiment(config, [1, 5], trials=32, drift_n_mc=100)
        backward = concentration_experiment(config, [5, 1], trials=32, drift_n_mc=100)
        assert forward[0] == backward[1]
        assert forward[1] == backward[0]

    def test_csv_emission(self, tmp_path):
        config = RealisticGenConfig(
            k=3,
            answer_law=PointSimplex((0.5, 0.3, 0.2)),
            confidence_noise=PointMass(0.6),
            seed=4,
        )
        rows = concentration_experiment(config, [2, 4], trials=10, drift_n_mc=100)
        out = tmp_path / "conc.csv"
        write_concentration_csv(rows, out)
        with out.open() as handle:
            parsed = list(csv.DictReader(handle))
        assert len(parsed) == 2
        assert set(parsed[0]) == {
            "m", "trials", "success_freq", "mean_mass_truth", "drift_1", "drift_2", "seed",
        }
        assert parsed[0]["m"] == "2"

    def test_trials_bound(self):
        config = IdealGenConfig(k=2, confidence_law=PointMass(0.7))
        with pytest.raises(ConfigurationError):
            concentration_experiment(config, [1], trials=0)
