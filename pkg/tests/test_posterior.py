import math

import numpy as np
import pytest
from scipy import stats

from conftest import block_relative_errors, central_differences, random_batch, random_small_arch
from svgd_forecast.errors import ConfigError, ContractError, NumericError
from svgd_forecast.model import ArchConfig, ParticleState, init_particle
from svgd_forecast.posterior import (
    Batch,
    PriorConfig,
    grad_log_joint,
    log_joint,
    log_likelihood,
    log_prior,
)

LOG_2PI = math.log(2 * math.pi)


def zero_network(arch):
    p = init_particle(arch, 0)
    p.theta[p.layout.weight_slice] = 0.0
    return p


class TestLogLikelihood:
    def test_at_mode_unit_precision(self, small_arch):
        p = zero_network(small_arch)
        b = 4
        batch = Batch(np.ones((b, 3, 20)), np.ones((b, 3, 4)), np.zeros((b, 3)), n_total=b)
        assert log_likelihood(p, batch) == pytest.approx(-(b * 3 / 2) * LOG_2PI, rel=1e-14)

    def test_single_point_closed_form(self):
        arch = ArchConfig(n_channels=1, n_calendar=1, input_length=4, conv_specs=((1, 2, 1),), encoder_dim=1,
                          recon_dim=1, decoder_hidden=(1,), horizon=1)
        p = zero_network(arch)
        r = 1.7
        batch = Batch(np.zeros((1, 1, 4)), np.zeros((1, 1, 1)), np.array([[r]]), n_total=1)
        assert log_likelihood(p, batch) == pytest.approx(-0.5 * LOG_2PI - r * r / 2, rel=1e-14)

    def test_matches_gaussian_pdf_oracle(self):
        rng = np.random.default_rng(0)
        for case in range(10):
            arch = random_small_arch(rng)
            p = init_particle(arch, case)
            p.theta[p.layout.noise_slice] = rng.normal(size=arch.horizon)
            batch = random_batch(arch, 3, rng)
            from svgd_forecast.model import forward

            mean = forward(p, batch.inputs, batch.target_calendar)
            sd = 1.0 / np.sqrt(np.exp(p.theta[p.layout.noise_slice]))
            oracle = stats.norm.logpdf(batch.targets, loc=mean, scale=sd).sum()
            assert log_likelihood(p, batch) == pytest.approx(oracle, rel=1e-12)

    def test_decreases_with_residual(self, small_arch):
        p = zero_network(small_arch)
        vals = [log_likelihood(p, Batch(np.ones((1, 3, 20)), np.ones((1, 3, 4)), np.full((1, 3), r), 1))
                for r in (0.0, 0.5, 1.0, 2.0)]
        assert vals == sorted(vals, reverse=True)

    def test_reordering_invariance(self, small_arch):
        rng = np.random.default_rng(1)
        p = init_particle(small_arch, 1)
        batch = random_batch(small_arch, 6, rng)
        perm = rng.permutation(6)
        shuffled = Batch(batch.inputs[perm], batch.target_calendar[perm], batch.targets[perm], batch.n_total)
        assert log_likelihood(p, shuffled) == pytest.approx(log_likelihood(p, batch), rel=1e-14)

    def test_non_finite_output(self, small_arch):
        p = init_particle(small_arch, 0)
        batch = random_batch(small_arch, 2, np.random.default_rng(0))
        bad = Batch(batch.inputs * np.inf, batch.target_calendar, batch.targets, batch.n_total)
        with pytest.raises(NumericError), np.errstate(invalid="ignore"):
            log_likelihood(p, bad)


class TestLogPrior:
    def test_zero_weights_gaussian_term(self, small_arch):
        p = zero_network(small_arch)
        log_alpha = 0.3
        p.theta[p.layout.alpha_index] = log_alpha
        priors = PriorConfig(2.0, 1.5, 1.0, 1.0)
        W = p.layout.n_weights
        gamma_terms = (stats.gamma.logpdf(math.exp(log_alpha), a=2.0, scale=1 / 1.5) + log_alpha
                       + small_arch.horizon * -1.0)
        expected = (W / 2) * (log_alpha - LOG_2PI) + gamma_terms
        assert log_prior(p, priors) == pytest.approx(expected, rel=1e-13)

    def test_unit_gamma_contributes_minus_one_per_dimension(self, small_arch):
        p = zero_network(small_arch)
        priors = PriorConfig()
        W = p.layout.n_weights
        # log alpha = 0, log lambda = 0: every Gamma(1, 1) term is -1 with zero Jacobian
        expected = (W / 2) * (-LOG_2PI) - 1.0 - small_arch.horizon
        assert log_prior(p, priors) == pytest.approx(expected, rel=1e-14)

    def test_matches_scipy_densities(self, small_arch):
        rng = np.random.default_rng(3)
        p = init_particle(small_arch, 3)
        p.theta[:] = rng.normal(0, 0.5, p.layout.size)
        priors = PriorConfig(1.3, 0.7, 2.1, 0.4)
        lay = p.layout
        alpha = math.exp(p.theta[lay.alpha_index])
        lam = np.exp(p.theta[lay.noise_slice])
        w = p.theta[lay.weight_slice]
        oracle = (stats.norm.logpdf(w, scale=1 / math.sqrt(alpha)).sum()
                  + stats.gamma.logpdf(alpha, a=1.3, scale=1 / 0.7) + math.log(alpha)
                  + (stats.gamma.logpdf(lam, a=2.1, scale=1 / 0.4) + np.log(lam)).sum())
        assert log_prior(p, priors) == pytest.approx(oracle, rel=1e-12)

    def test_gradient_zero_at_zero_weights(self, small_arch):
        p = zero_network(small_arch)
        fd = central_differences(lambda t: log_prior(ParticleState(t, p.layout), PriorConfig()), p.theta,
                                 index=range(p.layout.n_weights))
        np.testing.assert_allclose(fd[: p.layout.n_weights], 0.0, atol=1e-9)

    def test_prior_config_validation(self):
        with pytest.raises(ConfigError):
            PriorConfig(a0=0.0)


class TestGradLogJoint:
    @pytest.mark.parametrize("seed", range(3))
    def test_finite_differences_every_block(self, seed):
        rng = np.random.default_rng(10 + seed)
        arch = random_small_arch(rng)
        p = init_particle(arch, seed)
        p.theta[:] += rng.normal(0, 0.2, p.layout.size)
        batch = random_batch(arch, 5, rng)
        priors = PriorConfig(1.5, 0.8, 1.2, 0.9)
        grad = grad_log_joint(p, batch, priors)
        fd = central_differences(lambda t: log_joint(ParticleState(t, p.layout), batch, priors), p.theta)
        errs = block_relative_errors(p.layout, grad, fd)
        assert max(errs.values()) < 1e-5, errs

    def test_full_batch_is_exact_log_joint(self, small_arch):
        rng = np.random.default_rng(0)
        p = init_particle(small_arch, 0)
        batch = random_batch(small_arch, 4, rng)
        full = Batch(batch.inputs, batch.target_calendar, batch.targets, n_total=4)
        assert full.scale == 1.0
        fd = central_differences(
            lambda t: log_prior(ParticleState(t, p.layout), PriorConfig())
            + log_likelihood(ParticleState(t, p.layout), full),
            p.theta,
        )
        np.testing.assert_allclose(grad_log_joint(p, full, PriorConfig()), fd, rtol=1e-5, atol=1e-6)

    def test_doubling_n_total_doubles_likelihood_part(self, small_arch):
        rng = np.random.default_rng(2)
        p = init_particle(small_arch, 2)
        batch = random_batch(small_arch, 4, rng)
        double = Batch(batch.inputs, batch.target_calendar, batch.targets, 2 * batch.n_total)
        priors = PriorConfig()
        lik1 = grad_log_joint(p, batch, priors, include_prior=False)
        lik2 = grad_log_joint(p, double, priors, include_prior=False)
        np.testing.assert_array_equal(lik2, 2 * lik1)
        prior_part = grad_log_joint(p, batch, priors) - lik1
        np.testing.assert_allclose(grad_log_joint(p, double, priors) - lik2, prior_part, rtol=1e-9, atol=1e-9)

    def test_minibatches_average_to_full_gradient(self, small_arch):
        rng = np.random.default_rng(4)
        p = init_particle(small_arch, 4)
        data = random_batch(small_arch, 12, rng)
        priors = PriorConfig()
        full = grad_log_joint(p, Batch(data.inputs, data.target_calendar, data.targets, 12), priors)
        parts = [
            grad_log_joint(p, Batch(data.inputs[s], data.target_calendar[s], data.targets[s], 12), priors)
            for s in (slice(0, 4), slice(4, 8), slice(8, 12))
        ]
        np.testing.assert_allclose(np.mean(parts, axis=0), full, rtol=1e-10, atol=1e-10)

    def test_maximum_likelihood_mode_skips_prior(self, small_arch):
        rng = np.random.default_rng(5)
        p = init_particle(small_arch, 5)
        batch = random_batch(small_arch, 3, rng)
        g = grad_log_joint(p, batch, PriorConfig(), include_prior=False)
        assert g[p.layout.alpha_index] == 0.0
        fd = central_differences(lambda t: batch.scale * log_likelihood(ParticleState(t, p.layout), batch), p.theta)
        errs = block_relative_errors(p.layout, g, fd)
        assert max(errs.values()) < 1e-5

    def test_batch_validation(self):
        with pytest.raises(ContractError):
            Batch(np.zeros((2, 1, 4)), np.zeros((2, 1, 1)), np.zeros((2, 1)), n_total=1)
