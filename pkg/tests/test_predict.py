import math

import numpy as np
import pytest

from svgd_forecast.data import IdentityTransform, Transform
from svgd_forecast.errors import ConfigError, DataError
from svgd_forecast.model import forward, init_particle
from svgd_forecast.predict import (
    PREDICTION_COLUMNS,
    credible_interval,
    predict_original_scale,
    predictive_mean,
    predictive_variance,
    read_predictions,
    summarize,
    summarize_samples,
    write_predictions,
    z_value,
)
from svgd_forecast.svgd import ParticleEnsemble


def ensemble_from(arch, seeds, log_lam=None):
    parts = [init_particle(arch, s) for s in seeds]
    theta = np.stack([p.theta for p in parts])
    ens = ParticleEnsemble(theta, parts[0].layout)
    if log_lam is not None:
        ens.theta[:, ens.layout.noise_slice] = log_lam
    return ens


@pytest.fixture
def window(small_arch):
    rng = np.random.default_rng(0)
    return rng.normal(size=(small_arch.n_channels, small_arch.input_length)), rng.normal(
        size=(small_arch.horizon, small_arch.n_calendar))


class TestMean:
    def test_single_particle_is_forward(self, small_arch, window):
        ens = ensemble_from(small_arch, [3])
        np.testing.assert_array_equal(predictive_mean(ens, *window), forward(ens.particle(0), *window))

    def test_identical_particles(self, small_arch, window):
        ens = ensemble_from(small_arch, [5, 5, 5])
        np.testing.assert_allclose(predictive_mean(ens, *window), forward(ens.particle(0), *window), rtol=1e-15)
        var_model, _, _ = predictive_variance(ens, *window)
        np.testing.assert_allclose(var_model, 0.0, atol=1e-30)

    def test_three_particles_hand_average(self, small_arch, window):
        ens = ensemble_from(small_arch, [1, 2, 3])
        outs = [forward(ens.particle(i), *window) for i in range(3)]
        expected = (outs[0] + outs[1] + outs[2]) / 3
        np.testing.assert_allclose(predictive_mean(ens, *window), expected, rtol=1e-12)

    def test_batched_matches_single(self, small_arch):
        rng = np.random.default_rng(2)
        ens = ensemble_from(small_arch, [1, 2])
        x = rng.normal(size=(4, 3, 20))
        cal = rng.normal(size=(4, 3, 4))
        batch = predictive_mean(ens, x, cal)
        for k in range(4):
            np.testing.assert_allclose(batch[k], predictive_mean(ens, x[k], cal[k]), rtol=1e-13)


class TestVariance:
    def test_single_particle(self, small_arch, window):
        log_lam = np.array([0.5, -0.3, 1.2])
        ens = ensemble_from(small_arch, [4], log_lam)
        var_model, var_noise, var_total = predictive_variance(ens, *window)
        np.testing.assert_array_equal(var_model, 0.0)
        np.testing.assert_allclose(var_total, np.exp(-log_lam), rtol=1e-15)

    def test_two_particle_worked_example(self):
        s = summarize_samples(np.array([[1.0], [3.0]]), np.array([[0.25], [0.25]]), level=0.95)
        assert s.var_model[0] == 1.0
        assert s.var_noise[0] == 0.25
        assert s.var_total[0] == 1.25
        eta = math.sqrt(1.25)
        assert eta == pytest.approx(1.11803, abs=5e-6)
        assert s.lo[0] == pytest.approx(2.0 - 1.959964 * eta, abs=1e-6)
        assert s.lo[0] == pytest.approx(-0.19131, abs=5e-6)
        assert s.hi[0] == pytest.approx(4.19131, abs=5e-6)

    def test_total_variance_identity_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n, d = rng.integers(1, 12), rng.integers(1, 7)
            f = rng.normal(size=(n, d)) * rng.uniform(0.1, 3)
            nv = rng.uniform(0.01, 2, size=(n, d))
            s = summarize_samples(f, nv)
            np.testing.assert_array_equal(s.var_total, s.var_model + s.var_noise)
            eta = (s.hi - s.mean) / z_value(0.95)
            np.testing.assert_allclose(eta**2, s.var_total, rtol=1e-12)
            np.testing.assert_allclose(s.hi - s.mean, s.mean - s.lo, rtol=1e-12)

    def test_monte_carlo_consistency(self):
        # particle means ~ N(2, 0.5^2); noise variances ~ Gamma(4, scale 0.1) with mean 0.4
        rng = np.random.default_rng(11)
        n = 10_000
        f = rng.normal(2.0, 0.5, size=(n, 2))
        nv = rng.gamma(4.0, 0.1, size=(n, 2))
        s = summarize_samples(f, nv)
        np.testing.assert_allclose(s.mean, 2.0, rtol=0.05)
        np.testing.assert_allclose(s.var_model, 0.25, rtol=0.05)
        np.testing.assert_allclose(s.var_noise, 0.4, rtol=0.05)

    def test_network_ensemble_matches_sample_summary(self, small_arch, window):
        ens = ensemble_from(small_arch, [1, 2, 3], log_lam=np.array([0.1, 0.2, 0.3]))
        f = np.stack([forward(ens.particle(i), *window) for i in range(3)])
        ref = summarize_samples(f, np.exp(-ens.theta[:, ens.layout.noise_slice]))
        var_model, var_noise, var_total = predictive_variance(ens, *window)
        np.testing.assert_allclose(var_model, ref.var_model, rtol=1e-12)
        np.testing.assert_allclose(var_noise, ref.var_noise, rtol=1e-12)
        lo, hi = credible_interval(ens, *window)
        np.testing.assert_allclose(lo, ref.lo, rtol=1e-12)
        np.testing.assert_allclose(hi, ref.hi, rtol=1e-12)


class TestInterval:
    def test_widens_with_level(self):
        rng = np.random.default_rng(3)
        f, nv = rng.normal(size=(5, 2)), rng.uniform(0.1, 1, size=(5, 2))
        widths = [summarize_samples(f, nv, level).hi - summarize_samples(f, nv, level).lo
                  for level in (0.5, 0.8, 0.9, 0.95, 0.99)]
        assert all(np.all(a < b) for a, b in zip(widths, widths[1:]))

    def test_z_value(self):
        assert z_value(0.95) == pytest.approx(1.959964, abs=1e-6)
        with pytest.raises(ConfigError):
            z_value(1.0)

    def test_cancellation_is_clamped_with_warning(self):
        f = np.array([[10000.000000000002], [10000.000000000002], [10000.0]])
        with pytest.warns(RuntimeWarning, match="clamped"):
            s = summarize_samples(f, np.zeros((3, 1)))
        assert s.lo[0] == s.hi[0] == s.mean[0]


class TestOriginalScale:
    def make(self):
        rng = np.random.default_rng(4)
        return summarize_samples(rng.normal(size=(6, 4, 3)), rng.uniform(0.1, 1, size=(6, 3)))

    def test_identity_transform(self):
        s = self.make()
        o = predict_original_scale(s, IdentityTransform())
        for name in ("mean", "lo", "hi", "var_model", "var_noise", "var_total"):
            np.testing.assert_array_equal(getattr(o, name), getattr(s, name))
        assert o.scale == "original"

    def test_monotone_and_round_trip(self):
        s = self.make()
        t = Transform(mean=4.0, std=0.5)
        o = predict_original_scale(s, t)
        assert np.all((o.lo <= o.mean) & (o.mean <= o.hi))
        np.testing.assert_allclose(t.forward(o.lo), s.lo, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(t.forward(o.hi), s.hi, rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(o.var_total, s.var_total)


class TestPredictionCsv:
    def test_round_trip(self, tmp_path, small_arch):
        rng = np.random.default_rng(5)
        ens = ensemble_from(small_arch, [1, 2])
        x, cal = rng.normal(size=(4, 3, 20)), rng.normal(size=(4, 3, 4))
        s = predict_original_scale(summarize(ens, x, cal, window_ids=np.arange(4)), Transform(3.0, 0.5))
        actual = rng.uniform(10, 30, size=(4, 3))
        path = tmp_path / "pred.csv"
        write_predictions(path, s, actual)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(PREDICTION_COLUMNS)
        assert len(lines) == 1 + 4 * 3
        back, back_actual = read_predictions(path)
        np.testing.assert_array_equal(back.mean, s.mean)
        np.testing.assert_array_equal(back.var_total, s.var_total)
        np.testing.assert_array_equal(back_actual, actual)

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(",".join(PREDICTION_COLUMNS) + "\n0,1,1,0,0,0,0,2,1\n0,2,x,0,0,0,0,2,1\n")
        with pytest.raises(DataError, match="row 2"):
            read_predictions(path)
