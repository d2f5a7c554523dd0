import numpy as np
import pytest
from scipy.stats import multivariate_normal

from qdsb.core.exceptions import BridgeError, ShapeError
from qdsb.services.bridge_service import (
    drift_target,
    lambda_weight,
    loss_terms,
    probability_flow_velocity,
    sample_bridge,
    sample_bridge_point,
    score_target,
)


class TestBridgePoint:
    def test_zero_sigma_returns_mean(self):
        x = sample_bridge_point(np.array([0.0]), np.array([2.0]), 0.5, 0.0, seed=0)
        assert x.tolist() == [1.0]

    def test_variance_at_midpoint(self):
        x0 = np.zeros((100_000, 1))
        x = sample_bridge_point(x0, x0, np.full(100_000, 0.5), 1.0, seed=0)
        assert x.var() == pytest.approx(0.25, rel=0.03)

    def test_deterministic_given_seed(self):
        a = sample_bridge_point(np.zeros(3), np.ones(3), 0.3, 0.25, seed=4)
        b = sample_bridge_point(np.zeros(3), np.ones(3), 0.3, 0.25, seed=4)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1])
    def test_time_outside_open_interval(self, t):
        with pytest.raises(BridgeError):
            sample_bridge_point(np.zeros(2), np.ones(2), t, 0.25, seed=0)


class TestTargets:
    def test_drift_example(self):
        u = drift_target(np.array([1.0]), np.array([0.0]), np.array([0.0]), 0.25)
        assert u[0] == pytest.approx(8.0 / 3.0)

    def test_drift_at_mean_is_displacement(self):
        x0, x1 = np.array([1.0, -1.0]), np.array([3.0, 2.0])
        mean = 0.5 * (x0 + x1)
        np.testing.assert_allclose(drift_target(mean, x0, x1, 0.5), x1 - x0)

    def test_score_points_to_mean(self):
        s = score_target(np.array([1.0]), np.zeros(1), np.zeros(1), 0.5, sigma=1.0)
        assert s[0] == pytest.approx(-4.0)

    def test_score_needs_positive_sigma(self):
        with pytest.raises(BridgeError):
            score_target(np.zeros(1), np.zeros(1), np.zeros(1), 0.5, sigma=0.0)

    def test_probability_flow_gives_bridge_sde(self, rng):
        x0, x1 = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
        x = rng.standard_normal((6, 2))
        t = np.array([0.05, 0.2, 0.4, 0.5, 0.7, 0.95])
        sigma = 0.4
        s = score_target(x, x0, x1, t, sigma)
        velocity = probability_flow_velocity(drift_target(x, x0, x1, t), s, t, sigma)
        np.testing.assert_allclose(velocity + 0.5 * sigma ** 2 * s, (x1 - x) / (1 - t)[:, None], rtol=1e-10, atol=1e-10)
        mean = (1 - t)[:, None] * x0 + t[:, None] * x1
        spread = ((1 - 2 * t) / (2 * t * (1 - t)))[:, None] * (x - mean)
        np.testing.assert_allclose(velocity, x1 - x0 + spread, rtol=1e-10, atol=1e-10)

    def test_score_matches_log_density_gradient(self):
        x0, x1 = np.array([0.5, -1.0]), np.array([2.0, 1.5])
        t, sigma = 0.3, 0.25
        density = multivariate_normal(mean=(1 - t) * x0 + t * x1, cov=sigma ** 2 * t * (1 - t) * np.eye(2))
        x = np.array([0.9, -0.2])
        h = 1e-5
        numeric = np.array([
            (density.logpdf(x + h * e) - density.logpdf(x - h * e)) / (2 * h) for e in np.eye(2)
        ])
        np.testing.assert_allclose(score_target(x, x0, x1, t, sigma), numeric, rtol=1e-5, atol=1e-5)

    def test_lambda_weight(self):
        assert lambda_weight(0.5, 0.25) == pytest.approx(0.125)


class TestBridgeSample:
    def test_lambda_times_score_is_minus_noise(self, rng):
        x0, x1 = rng.standard_normal((64, 2)), rng.standard_normal((64, 2))
        sample = sample_bridge(x0, x1, 0.25, rng)
        np.testing.assert_allclose(sample.lam[:, None] * sample.s_target, -sample.noise, rtol=1e-9, atol=1e-9)

    def test_targets_recompute_exactly(self, rng):
        x0, x1 = rng.standard_normal((16, 3)), rng.standard_normal((16, 3))
        sample = sample_bridge(x0, x1, 0.25, rng)
        np.testing.assert_array_equal(sample.u_target, drift_target(sample.x, x0, x1, sample.t))
        np.testing.assert_array_equal(sample.s_target, score_target(sample.x, x0, x1, sample.t, 0.25))

    def test_times_are_clamped(self, rng):
        x = np.zeros((5000, 1))
        sample = sample_bridge(x, x, 0.25, rng, t_min=0.1)
        assert sample.t.min() >= 0.1 and sample.t.max() <= 0.9

    def test_loss_zero_at_targets(self, rng):
        x0, x1 = rng.standard_normal((8, 2)), rng.standard_normal((8, 2))
        sample = sample_bridge(x0, x1, 0.25, rng)
        drift, score, total = loss_terms(sample.u_target, sample.s_target, sample)
        assert np.all(total == 0.0)
        assert drift.shape == score.shape == (8,)

    def test_loss_components(self, rng):
        x0, x1 = np.zeros((1, 1)), np.zeros((1, 1))
        sample = sample_bridge(x0, x1, 1.0, rng, t=np.array([0.5]))
        drift, score, total = loss_terms(sample.u_target + 1.0, sample.s_target + 2.0, sample)
        assert drift[0] == pytest.approx(1.0)
        assert score[0] == pytest.approx(0.25 * 4.0)
        assert total[0] == pytest.approx(2.0)

    def test_loss_shape_mismatch(self, rng):
        x0, x1 = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        sample = sample_bridge(x0, x1, 0.25, rng)
        with pytest.raises(ShapeError):
            loss_terms(sample.u_target[:, :1], sample.s_target, sample)
        with pytest.raises(ShapeError):
            loss_terms(sample.u_target, sample.s_target[:3], sample)
