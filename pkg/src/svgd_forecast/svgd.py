"""Stein variational gradient descent over an ensemble of network particles."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigError, ContractError, NumericError
from .model import ArchConfig, ParamLayout, ParticleState, init_theta
from .posterior import Batch, PriorConfig, grad_log_joint

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class SvgdConfig:
    n_particles: int = 10
    step_w: float = 1e-3
    step_noise: float = 1e-2
    batch_size: int = 64
    epochs: int = 20
    eps: float = 1e-6
    accum_decay: float = 0.9
    seed: int = 0
    workers: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ConfigError("n_particles must be >= 1")
        if not (self.step_w > 0 and self.step_noise > 0):
            raise ConfigError("step sizes must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.accum_decay < 1.0:
            raise ConfigError("accum_decay must lie in [0, 1)")
        if self.eps <= 0 or self.workers < 1:
            raise ConfigError("eps must be positive and workers >= 1")


@dataclass
class ParticleEnsemble:
    """n particles stacked into an (n, P) matrix sharing one layout."""

    theta: np.ndarray
    layout: Optional[ParamLayout] = None
    accumulators: Optional[np.ndarray] = None
    iteration: int = 0

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        if self.layout is not None and self.theta.shape[1] != self.layout.size:
            raise ContractError(f"ensemble width {self.theta.shape[1]} does not match layout size {self.layout.size}")

    def __len__(self):
        return self.theta.shape[0]

    @property
    def n_particles(self) -> int:
        return self.theta.shape[0]

    def particle(self, i: int) -> ParticleState:
        return ParticleState(self.theta[i], self.layout)

    def __iter__(self) -> Iterator[ParticleState]:
        return (self.particle(i) for i in range(len(self)))

    def save(self, directory: str | Path) -> None:
        """Write particles.bin, accumulators.bin (if any) and layout.json."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "particles.bin").write_bytes(np.ascontiguousarray(self.theta, dtype="<f8").tobytes())
        if self.accumulators is not None:
            (directory / "accumulators.bin").write_bytes(
                np.ascontiguousarray(self.accumulators, dtype="<f8").tobytes()
            )
        meta = {
            "version": CHECKPOINT_VERSION,
            "n_particles": self.n_particles,
            "iteration": self.iteration,
            "has_accumulators": self.accumulators is not None,
            "layout": self.layout.to_json_dict(),
        }
        (directory / "layout.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "ParticleEnsemble":
        directory = Path(directory)
        try:
            meta = json.loads((directory / "layout.json").read_text())
            raw = (directory / "particles.bin").read_bytes()
        except (OSError, ValueError) as exc:
            raise ContractError(f"unreadable checkpoint {directory}: {exc}") from exc
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta.get('version')!r}")
        layout = ParamLayout.from_json_dict(meta["layout"])
        n = meta["n_particles"]
        theta = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if theta.size != n * layout.size:
            raise ContractError(f"particles.bin holds {theta.size} values, expected {n} x {layout.size}")
        accum = None
        if meta.get("has_accumulators"):
            accum = np.frombuffer((directory / "accumulators.bin").read_bytes(), dtype="<f8").astype(np.float64)
            accum = accum.reshape(n, layout.size)
        return cls(theta.reshape(n, layout.size), layout, accum, meta.get("iteration", 0))


def _matrix(ensemble) -> np.ndarray:
    if isinstance(ensemble, ParticleEnsemble):
        return ensemble.theta
    return np.atleast_2d(np.asarray(ensemble, dtype=np.float64))


def median_bandwidth(ensemble) -> float:
    """h = H^2 / ln n with H the median pairwise distance; 1 when degenerate."""
    theta = _matrix(ensemble)
    n = theta.shape[0]
    if n == 1:
        return 1.0
    H = float(np.median(np.sqrt(pdist(theta, "sqeuclidean"))))
    if H == 0.0:
        return 1.0
    return H * H / math.log(n)


def rbf_kernel(ensemble, h: float):
    """Kernel matrix K and the summed kernel gradients (repulsion), (n, P).

    repulsion_i = sum_j grad_{theta_j} k(theta_j, theta_i)
                = (2 / h) sum_j K_ji (theta_i - theta_j)
    """
    theta = _matrix(ensemble)
    if not h > 0:
        raise ConfigError(f"bandwidth must be positive, got {h}")
    K = np.exp(-squareform(pdist(theta, "sqeuclidean")) / h)
    repulsion = (2.0 / h) * (theta * K.sum(axis=0)[:, None] - K.T @ theta)
    return K, repulsion


def svgd_direction(theta: np.ndarray, grads: np.ndarray, h: Optional[float] = None) -> np.ndarray:
    """phi_i = (1/n) sum_j [k(theta_j, theta_i) grads_j + grad_{theta_j} k(theta_j, theta_i)]."""
    if h is None:
        h = median_bandwidth(theta)
    K, repulsion = rbf_kernel(theta, h)
    return (K.T @ grads + repulsion) / theta.shape[0]


class AdaptiveScaler:
    """Per-coordinate step normalisation by a running RMS of past updates.

    The first call seeds the accumulator with the squared update; later calls
    decay it geometrically. Scaled update: phi / (eps + sqrt(accumulator)).
    """

    def __init__(self, eps: float = 1e-6, decay: float = 0.9, accumulator: Optional[np.ndarray] = None):
        self.eps = eps
        self.decay = decay
        self.accumulator = None if accumulator is None else np.array(accumulator, dtype=np.float64)

    def __call__(self, phi: np.ndarray) -> np.ndarray:
        sq = phi * phi
        if self.accumulator is None:
            self.accumulator = sq
        else:
            self.accumulator = self.decay * self.accumulator + (1.0 - self.decay) * sq
        return phi / (self.eps + np.sqrt(self.accumulator))


def step_sizes(layout: ParamLayout, step_w: float, step_noise: float) -> np.ndarray:
    """Per-coordinate base step: step_w on network weights, step_noise on precisions."""
    steps = np.full(layout.size, step_noise)
    steps[layout.weight_slice] = step_w
    return steps


def svgd_step(theta: np.ndarray, grads: np.ndarray, steps, scaler: AdaptiveScaler, iteration: int = 0,
              layout: Optional[ParamLayout] = None) -> np.ndarray:
    """One transport update; the bandwidth is recomputed from ``theta``."""
    if not np.all(np.isfinite(grads)):
        raise NumericError(f"non-finite log-joint gradient at iteration {iteration}")
    phi = svgd_direction(theta, grads)
    new = theta + steps * scaler(phi)
    if not np.all(np.isfinite(new)):
        i, k = np.argwhere(~np.isfinite(new))[0]
        where = f"particle {i}, coordinate {k}"
        if layout is not None:
            block = next(b.name for b in layout.blocks if b.offset <= k < b.offset + b.size)
            where = f"particle {i}, block {block!r}"
        raise NumericError(f"SVGD update diverged at iteration {iteration} ({where})")
    return new


def svgd_sample(theta0, score: Callable[[np.ndarray, int], np.ndarray], n_iter: int, step: float = 0.05,
                eps: float = 1e-6, decay: float = 0.9) -> np.ndarray:
    """Run SVGD against an arbitrary score function ``score(theta, iteration) -> (n, P)``."""
    theta = np.array(theta0, dtype=np.float64, ndmin=2)
    scaler = AdaptiveScaler(eps, decay)
    for it in range(n_iter):
        theta = svgd_step(theta, score(theta, it), step, scaler, it)
    return theta


def epoch_batches(n_rows: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index chunks covering every row once; the last may be short."""
    order = rng.permutation(n_rows)
    return [order[i : i + batch_size] for i in range(0, n_rows, batch_size)]


def seed_streams(seed: int, n_particles: int):
    """(per-particle init generators, batch-order generator) from one seed."""
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    return [np.random.default_rng(s) for s in init_ss.spawn(n_particles)], np.random.default_rng(batch_ss)


def init_ensemble(arch: ArchConfig, n_particles: int, seed: int) -> ParticleEnsemble:
    layout = ParamLayout.from_arch(arch)
    init_rngs, _ = seed_streams(seed, n_particles)
    return ParticleEnsemble(np.stack([init_theta(layout, r) for r in init_rngs]), layout)


def train(dataset, arch: ArchConfig, priors: PriorConfig, config: SvgdConfig, include_prior: bool = True,
          callback: Optional[Callable] = None, checkpoint_dir: Optional[str | Path] = None) -> ParticleEnsemble:
    """Fit an ensemble to a WindowedDataset by minibatch SVGD.

    ``callback(epoch, ensemble)`` runs after every epoch. With
    ``checkpoint_dir`` and ``config.checkpoint_every > 0`` the ensemble is
    written to ``checkpoint_dir/epoch_XXXX`` on that cadence.
    """
    n_rows = len(dataset)
    if n_rows == 0:
        raise ContractError("training split is empty")
    ensemble = init_ensemble(arch, config.n_particles, config.seed)
    layout = ensemble.layout
    _, batch_rng = seed_streams(config.seed, config.n_particles)
    steps = step_sizes(layout, config.step_w, config.step_noise)
    scaler = AdaptiveScaler(config.eps, config.accum_decay)
    theta = ensemble.theta
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 and config.n_particles > 1 else None

    def particle_grad(i, batch, it):
        try:
            return grad_log_joint(ParticleState(theta[i], layout), batch, priors, include_prior)
        except NumericError as exc:
            raise NumericError(f"iteration {it}, particle {i}: {exc}") from exc

    it = 0
    try:
        for epoch in range(config.epochs):
            for idx in epoch_batches(n_rows, config.batch_size, batch_rng):
                batch = Batch.from_dataset(dataset, idx)
                if pool is None:
                    grads = np.stack([particle_grad(i, batch, it) for i in range(len(theta))])
                else:
                    grads = np.stack(list(pool.map(lambda i: particle_grad(i, batch, it), range(len(theta)))))
                theta = svgd_step(theta, grads, steps, scaler, it, layout)
                it += 1
            ensemble = ParticleEnsemble(theta, layout, scaler.accumulator, it)
            logger.debug("epoch %d done (%d iterations)", epoch + 1, it)
            if callback is not None:
                callback(epoch, ensemble)
            if checkpoint_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                ensemble.save(Path(checkpoint_dir) / f"epoch_{epoch + 1:04d}")
    finally:
        if pool is not None:
            pool.shutdown()
    return ParticleEnsemble(theta, layout, scaler.accumulator, it)
