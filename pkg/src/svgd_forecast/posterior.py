"""Log joint density of a particle and its gradient.

Model: y | theta ~ N(f_w(x), diag(1 / lambda)), w | alpha ~ N(0, I / alpha),
alpha ~ Gamma(a0, b0), lambda_j ~ Gamma(a1, b1) (shape / rate). The particle
stores log(lambda) and log(alpha), so the prior includes the log-Jacobian of
that reparameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConfigError, ContractError, NumericError
from .model import ParticleState, network_backward, network_forward

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorConfig:
    a0: float = 1.0
    b0: float = 1.0
    a1: float = 1.0
    b1: float = 1.0

    def __post_init__(self):
        for name in ("a0", "b0", "a1", "b1"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"prior parameter {name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    target_calendar: np.ndarray
    targets: np.ndarray
    n_total: int

    def __post_init__(self):
        b = len(self.targets)
        if b < 1:
            raise ContractError("empty batch")
        if self.n_total < b:
            raise ContractError(f"n_total={self.n_total} is smaller than the batch size {b}")
        if len(self.inputs) != b or len(self.target_calendar) != b:
            raise ContractError("batch arrays disagree on the number of windows")

    @property
    def size(self) -> int:
        return len(self.targets)

    @property
    def scale(self) -> float:
        return self.n_total / self.size

    @classmethod
    def from_dataset(cls, dataset, index=None, n_total=None) -> "Batch":
        if index is None:
            index = slice(None)
        targets = dataset.targets[index]
        return cls(
            inputs=dataset.inputs[index],
            target_calendar=dataset.target_calendar[index],
            targets=targets,
            n_total=len(dataset) if n_total is None else n_total,
        )


def _gamma_logpdf(x, shape, rate):
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def _outputs(p: ParticleState, batch: Batch, keep=False):
    res = network_forward(p.layout, p.theta, np.asarray(batch.inputs), np.asarray(batch.target_calendar), keep=keep)
    out = res[0] if keep else res
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite network output")
    return res


def gaussian_loglik(targets, outputs, log_lam) -> float:
    """Sum of per-horizon Gaussian log densities with precision exp(log_lam)."""
    resid = targets - outputs
    ll = 0.5 * log_lam - 0.5 * np.exp(log_lam) * resid**2 - 0.5 * LOG_2PI
    return float(ll.sum())


def log_likelihood(p: ParticleState, batch: Batch) -> float:
    """Unscaled Gaussian log-likelihood of the batch targets."""
    return gaussian_loglik(batch.targets, _outputs(p, batch), p.theta[p.layout.noise_slice])


def log_prior(p: ParticleState, priors: PriorConfig) -> float:
    layout = p.layout
    w = p.theta[layout.weight_slice]
    log_alpha = p.theta[layout.alpha_index]
    log_lam = p.theta[layout.noise_slice]
    alpha = math.exp(log_alpha)
    n_w = w.size
    lp = 0.5 * n_w * (log_alpha - LOG_2PI) - 0.5 * alpha * float(w @ w)
    lp += float(_gamma_logpdf(alpha, priors.a0, priors.b0)) + log_alpha
    lp += float(np.sum(_gamma_logpdf(np.exp(log_lam), priors.a1, priors.b1) + log_lam))
    return lp


def log_joint(p: ParticleState, batch: Batch, priors: PriorConfig, include_prior: bool = True) -> float:
    """log p0(theta) + (N / b) * log p(batch | theta)."""
    value = batch.scale * log_likelihood(p, batch)
    if include_prior:
        value += log_prior(p, priors)
    return value


def grad_log_joint(p: ParticleState, batch: Batch, priors: PriorConfig, include_prior: bool = True) -> np.ndarray:
    """Gradient of :func:`log_joint` w.r.t. every entry of theta.

    With ``include_prior=False`` the objective is the scaled likelihood alone
    (maximum-likelihood training) and the log-alpha entry gets zero gradient.
    """
    layout = p.layout
    theta = p.theta
    out, cache = _outputs(p, batch, keep=True)
    log_lam = theta[layout.noise_slice]
    lam = np.exp(log_lam)
    resid = batch.targets - out
    scale = batch.scale

    grad = network_backward(layout, theta, cache, scale * lam * resid)
    grad[layout.noise_slice] = scale * np.sum(0.5 - 0.5 * lam * resid**2, axis=0)

    if include_prior:
        w = theta[layout.weight_slice]
        alpha = math.exp(theta[layout.alpha_index])
        grad[layout.weight_slice] -= alpha * w
        grad[layout.noise_slice] += priors.a1 - priors.b1 * lam
        grad[layout.alpha_index] = 0.5 * w.size - 0.5 * alpha * float(w @ w) + priors.a0 - priors.b0 * alpha

    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))[0]
        block = next(b.name for b in layout.blocks if b.offset <= bad < b.offset + b.size)
        raise NumericError(f"non-finite gradient in block {block!r}")
    return grad
