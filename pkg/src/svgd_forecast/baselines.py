"""Plain two-hidden-layer MLP on the flattened input window.

Trained by maximum likelihood (Gaussian, learned per-horizon noise) with
the same adaptive step rule as the particle sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .svgd import AdaptiveScaler, epoch_batches


@dataclass
class MLPParams:
    dims: tuple[int, ...]  # (in, h1, h2, d)
    theta: np.ndarray

    def unpack(self):
        views, offset = [], 0
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            W = self.theta[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
            offset += fan_in * fan_out
            b = self.theta[offset : offset + fan_out]
            offset += fan_out
            views.append((W, b))
        log_lam = self.theta[offset : offset + self.dims[-1]]
        return views, log_lam

    @property
    def noise_slice(self) -> slice:
        d = self.dims[-1]
        return slice(self.theta.size - d, self.theta.size)


def mlp_size(dims) -> int:
    return sum(a * b + b for a, b in zip(dims[:-1], dims[1:])) + dims[-1]


def init_mlp(dims, rng: np.random.Generator) -> MLPParams:
    params = MLPParams(tuple(dims), np.zeros(mlp_size(dims)))
    layers, _ = params.unpack()
    for k, (W, _) in enumerate(layers):
        gain = 3.0 if k == len(layers) - 1 else 6.0
        W[...] = rng.uniform(-1, 1, size=W.shape) * math.sqrt(gain / W.shape[1])
    return params


def mlp_forward(params: MLPParams, X: np.ndarray, keep: bool = False):
    layers, _ = params.unpack()
    acts = [X]
    a = X
    for k, (W, b) in enumerate(layers):
        a = a @ W.T + b
        if k < len(layers) - 1:
            a = np.maximum(a, 0.0)
        acts.append(a)
    return (a, acts) if keep else a


def mlp_grad_loglik(params: MLPParams, X, y, scale: float) -> np.ndarray:
    """Gradient of scale * Gaussian log-likelihood w.r.t. all MLP parameters."""
    layers, log_lam = params.unpack()
    out, acts = mlp_forward(params, X, keep=True)
    lam = np.exp(log_lam)
    resid = y - out
    grad = MLPParams(params.dims, np.zeros_like(params.theta))
    g_layers, g_noise = grad.unpack()
    g_noise[...] = scale * np.sum(0.5 - 0.5 * lam * resid**2, axis=0)
    delta = scale * lam * resid
    for k in reversed(range(len(layers))):
        W, _ = layers[k]
        g_layers[k][0][...] = delta.T @ acts[k]
        g_layers[k][1][...] = delta.sum(axis=0)
        if k:
            delta = (delta @ W) * (acts[k] > 0)
    return grad.theta


def train_mlp(dataset, hidden=(64, 64), step=1e-3, step_noise=1e-2, batch_size=64, epochs=20, seed=0,
              eps=1e-6, decay=0.9) -> MLPParams:
    n = len(dataset)
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    in_dim = math.prod(dataset.inputs.shape[1:])
    d = dataset.targets.shape[1]
    params = init_mlp((in_dim, *hidden, d), np.random.default_rng(init_ss))
    steps = np.full(params.theta.size, step)
    steps[params.noise_slice] = step_noise
    scaler = AdaptiveScaler(eps, decay)
    rng = np.random.default_rng(batch_ss)
    it = 0
    for _ in range(epochs):
        for idx in epoch_batches(n, batch_size, rng):
            X = np.asarray(dataset.inputs[idx], dtype=np.float64).reshape(len(idx), -1)
            g = mlp_grad_loglik(params, X, dataset.targets[idx], n / len(idx))
            params.theta = params.theta + steps * scaler(g)
            if not np.all(np.isfinite(params.theta)):
                raise NumericError(f"MLP training diverged at iteration {it}")
            it += 1
    return params


def mlp_predict(params: MLPParams, inputs, chunk: int = 1024):
    """(mean (N, d), noise variance (d,))."""
    n = len(inputs)
    out = np.empty((n, params.dims[-1]))
    for s in range(0, n, chunk):
        X = np.asarray(inputs[s : s + chunk], dtype=np.float64).reshape(min(chunk, n - s), -1)
        out[s : s + chunk] = mlp_forward(params, X)
    _, log_lam = params.unpack()
    return out, np.exp(-log_lam)
