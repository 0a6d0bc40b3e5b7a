"""scikit-learn style wrappers around the transform, the sampler and the baselines."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import mlp_predict, train_mlp
from .data import fit_transform
from .model import ArchConfig
from .posterior import PriorConfig
from .predict import PredictiveSummary, summarize, summarize_samples
from .svgd import ParticleEnsemble, SvgdConfig, train
from .validation import check_windows


class LogZScoreTransformer(TransformerMixin, BaseEstimator):
    """log1p followed by standardisation with statistics from ``fit``."""

    def fit(self, X, y=None):
        self.transform_ = fit_transform(np.ravel(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.forward(np.asarray(X, dtype=np.float64))

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.inverse(np.asarray(X, dtype=np.float64))


class _NetworkForecaster(RegressorMixin, BaseEstimator):
    """Shared fit / predict for estimators built on the conv encoder-decoder."""

    def _n_particles(self) -> int:
        raise NotImplementedError

    def _include_prior(self) -> bool:
        raise NotImplementedError

    def _priors(self) -> PriorConfig:
        return PriorConfig()

    def fit(self, X, y=None, callback=None):
        """Fit on windows; ``X`` is a WindowedDataset or ``(inputs, target_calendar)``."""
        data = check_windows(X, y, require_y=True)
        n, c, length = data.inputs.shape
        self.arch_ = ArchConfig(
            n_channels=c,
            n_calendar=data.target_calendar.shape[2],
            input_length=length,
            conv_specs=self.conv_specs,
            encoder_dim=self.encoder_dim,
            recon_dim=self.recon_dim,
            decoder_hidden=self.decoder_hidden,
            horizon=data.target_calendar.shape[1],
        )
        self.config_ = SvgdConfig(
            n_particles=self._n_particles(),
            step_w=self.step_w,
            step_noise=self.step_noise,
            batch_size=self.batch_size,
            epochs=self.epochs,
            accum_decay=self.accum_decay,
            seed=self.random_state,
            workers=self.workers,
        )
        self.ensemble_ = train(data, self.arch_, self._priors(), self.config_,
                               include_prior=self._include_prior(), callback=callback)
        self.n_features_in_ = c * length
        return self

    @classmethod
    def from_ensemble(cls, ensemble: ParticleEnsemble, **params):
        est = cls(**params)
        est.ensemble_ = ensemble
        est.arch_ = ensemble.layout.arch
        return est

    def predict_summary(self, X, level=None) -> PredictiveSummary:
        check_is_fitted(self, "ensemble_")
        data = check_windows(X, horizon=self.arch_.horizon)
        return summarize(self.ensemble_, data.inputs, data.target_calendar, self.level if level is None else level,
                         window_ids=np.arange(len(data)))

    def predict(self, X):
        return self.predict_summary(X).mean

    def predict_interval(self, X, level=None):
        s = self.predict_summary(X, level)
        return s.lo, s.hi


class BNNForecaster(_NetworkForecaster):
    """Bayesian encoder-decoder forecaster fitted by SVGD with ``n_particles`` networks."""

    def __init__(self, n_particles=10, conv_specs=((16, 7, 2), (32, 5, 2), (32, 3, 2)), encoder_dim=64,
                 recon_dim=32, decoder_hidden=(64,), a0=1.0, b0=1.0, a1=1.0, b1=1.0, step_w=1e-3,
                 step_noise=1e-2, batch_size=64, epochs=20, accum_decay=0.9, level=0.95, workers=1,
                 random_state=0):
        self.n_particles = n_particles
        self.conv_specs = conv_specs
        self.encoder_dim = encoder_dim
        self.recon_dim = recon_dim
        self.decoder_hidden = decoder_hidden
        self.a0 = a0
        self.b0 = b0
        self.a1 = a1
        self.b1 = b1
        self.step_w = step_w
        self.step_noise = step_noise
        self.batch_size = batch_size
        self.epochs = epochs
        self.accum_decay = accum_decay
        self.level = level
        self.workers = workers
        self.random_state = random_state

    def _n_particles(self):
        return self.n_particles

    def _include_prior(self):
        return True

    def _priors(self):
        return PriorConfig(self.a0, self.b0, self.a1, self.b1)


class DetNNForecaster(_NetworkForecaster):
    """Same network, one particle, maximum likelihood (no prior, no repulsion)."""

    def __init__(self, conv_specs=((16, 7, 2), (32, 5, 2), (32, 3, 2)), encoder_dim=64, recon_dim=32,
                 decoder_hidden=(64,), step_w=1e-3, step_noise=1e-2, batch_size=64, epochs=20,
                 accum_decay=0.9, level=0.95, workers=1, random_state=0):
        self.conv_specs = conv_specs
        self.encoder_dim = encoder_dim
        self.recon_dim = recon_dim
        self.decoder_hidden = decoder_hidden
        self.step_w = step_w
        self.step_noise = step_noise
        self.batch_size = batch_size
        self.epochs = epochs
        self.accum_decay = accum_decay
        self.level = level
        self.workers = workers
        self.random_state = random_state

    def _n_particles(self):
        return 1

    def _include_prior(self):
        return False


class MLPForecaster(RegressorMixin, BaseEstimator):
    """Two-hidden-layer MLP on the flattened input window."""

    def __init__(self, hidden=(64, 64), step=1e-3, step_noise=1e-2, batch_size=64, epochs=20, level=0.95,
                 random_state=0):
        self.hidden = hidden
        self.step = step
        self.step_noise = step_noise
        self.batch_size = batch_size
        self.epochs = epochs
        self.level = level
        self.random_state = random_state

    def fit(self, X, y=None):
        data = check_windows(X, y, require_y=True)
        self.params_ = train_mlp(data, tuple(self.hidden), self.step, self.step_noise, self.batch_size,
                                 self.epochs, self.random_state)
        self.horizon_ = data.targets.shape[1]
        self.n_features_in_ = int(np.prod(data.inputs.shape[1:]))
        return self

    def predict_summary(self, X, level=None) -> PredictiveSummary:
        check_is_fitted(self, "params_")
        data = check_windows(X, horizon=self.horizon_)
        mean, noise_var = mlp_predict(self.params_, data.inputs)
        return summarize_samples(mean[None], noise_var[None], self.level if level is None else level,
                                 window_ids=np.arange(len(data)))

    def predict(self, X):
        return self.predict_summary(X).mean
