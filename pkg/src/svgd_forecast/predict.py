"""Posterior predictive summaries from a particle ensemble."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, ContractError, DataError
from .model import network_forward

PREDICTION_COLUMNS = ("window_id", "horizon", "mean", "var_model", "var_noise", "var_total", "lo95", "hi95", "actual")


@dataclass(frozen=True)
class PredictiveSummary:
    """Per-horizon predictive moments; every array has trailing dimension d.

    Variances always refer to the transformed (modelling) scale. ``scale``
    records whether ``mean``/``lo``/``hi`` are transformed or original units.
    """

    mean: np.ndarray
    var_model: np.ndarray
    var_noise: np.ndarray
    var_total: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float = 0.95
    scale: str = "transformed"
    window_ids: Optional[np.ndarray] = None

    @property
    def std_total(self) -> np.ndarray:
        return np.sqrt(self.var_total)


def z_value(level: float) -> float:
    """Upper (1 - level) / 2 quantile of the standard normal."""
    if not 0.0 < level < 1.0:
        raise ConfigError(f"credible level must lie in (0, 1), got {level}")
    return float(norm.ppf(0.5 + 0.5 * level))


def ensemble_outputs(ensemble, x, cal, chunk: int = 1024):
    """Network means (n, B, d) and noise variances (n, d) for every particle."""
    layout = ensemble.layout
    x = np.asarray(x) if not isinstance(x, np.ndarray) else x
    single = x.ndim == 2
    if single:
        x, cal = x[None], np.asarray(cal)[None]
    cal = np.asarray(cal)
    arch = layout.arch
    if x.shape[1:] != (arch.n_channels, arch.input_length) or cal.shape[1:] != (arch.horizon, arch.n_calendar):
        raise ContractError(f"input shapes {x.shape}, {cal.shape} do not match the ensemble architecture")
    B = x.shape[0]
    f = np.empty((ensemble.n_particles, B, arch.horizon))
    for start in range(0, B, chunk):
        xb = np.asarray(x[start : start + chunk], dtype=np.float64)
        cb = np.asarray(cal[start : start + chunk], dtype=np.float64)
        for i in range(ensemble.n_particles):
            f[i, start : start + chunk] = network_forward(layout, ensemble.theta[i], xb, cb)
    noise_var = np.exp(-ensemble.theta[:, layout.noise_slice])
    if single:
        f = f[:, 0]
    return f, noise_var


def _moments(f, noise_var):
    noise_var = noise_var.reshape((noise_var.shape[0],) + (1,) * (f.ndim - 2) + (noise_var.shape[-1],))
    mean = f.mean(axis=0)
    var_model = ((f - mean) ** 2).mean(axis=0)
    var_noise = np.broadcast_to(noise_var.mean(axis=0), mean.shape).copy()
    return mean, var_model, var_noise


def _eta(f, noise_var):
    """sqrt(mean_i(sigma_i^2 + f_i^2) - mean_i(f_i)^2), clamped at zero."""
    noise_var = noise_var.reshape((noise_var.shape[0],) + (1,) * (f.ndim - 2) + (noise_var.shape[-1],))
    mean = f.mean(axis=0)
    eta_sq = (noise_var + f * f).mean(axis=0) - mean * mean
    if np.any(eta_sq < 0):
        warnings.warn("negative predictive variance from cancellation; clamped at 0", RuntimeWarning, stacklevel=3)
        eta_sq = np.maximum(eta_sq, 0.0)
    return np.sqrt(eta_sq)


def summarize_samples(f, noise_var, level: float = 0.95, window_ids=None) -> PredictiveSummary:
    """Summary from particle means ``f`` (n, ..., d) and noise variances (n, d)."""
    f = np.asarray(f, dtype=np.float64)
    noise_var = np.asarray(noise_var, dtype=np.float64)
    mean, var_model, var_noise = _moments(f, noise_var)
    half = z_value(level) * _eta(f, noise_var)
    return PredictiveSummary(
        mean=mean,
        var_model=var_model,
        var_noise=var_noise,
        var_total=var_model + var_noise,
        lo=mean - half,
        hi=mean + half,
        level=level,
        window_ids=window_ids,
    )


def summarize(ensemble, x, cal, level: float = 0.95, window_ids=None) -> PredictiveSummary:
    f, noise_var = ensemble_outputs(ensemble, x, cal)
    return summarize_samples(f, noise_var, level, window_ids)


def predictive_mean(ensemble, x, cal) -> np.ndarray:
    f, _ = ensemble_outputs(ensemble, x, cal)
    return f.mean(axis=0)


def predictive_variance(ensemble, x, cal):
    """(var_model, var_noise, var_total): law-of-total-variance split."""
    f, noise_var = ensemble_outputs(ensemble, x, cal)
    _, var_model, var_noise = _moments(f, noise_var)
    return var_model, var_noise, var_model + var_noise


def credible_interval(ensemble, x, cal, level: float = 0.95):
    z = z_value(level)
    f, noise_var = ensemble_outputs(ensemble, x, cal)
    mean = f.mean(axis=0)
    half = z * _eta(f, noise_var)
    return mean - half, mean + half


def predict_original_scale(summary: PredictiveSummary, transform) -> PredictiveSummary:
    """Map mean and interval endpoints through the monotone inverse transform."""
    if summary.scale != "transformed":
        raise ContractError("summary is already on the original scale")
    return replace(
        summary,
        mean=transform.inverse(summary.mean),
        lo=transform.inverse(summary.lo),
        hi=transform.inverse(summary.hi),
        scale="original",
    )


def write_predictions(path, summary: PredictiveSummary, actual) -> None:
    """CSV with original-scale mean/bounds/actual and transformed-scale variances."""
    if summary.scale != "original":
        raise ContractError("write_predictions expects an original-scale summary")
    actual = np.asarray(actual, dtype=np.float64)
    n, d = summary.mean.shape
    ids = np.arange(n) if summary.window_ids is None else np.asarray(summary.window_ids)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for k in range(n):
            for j in range(d):
                writer.writerow(
                    (int(ids[k]), j + 1)
                    + tuple(
                        repr(float(a[k, j]))
                        for a in (summary.mean, summary.var_model, summary.var_noise, summary.var_total,
                                  summary.lo, summary.hi, actual)
                    )
                )


def read_predictions(path):
    """Parse a predictions CSV into ``(PredictiveSummary, actual)`` on the original scale."""
    path = Path(path)
    rows = {}
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTION_COLUMNS:
            raise DataError(f"{path}: expected header {','.join(PREDICTION_COLUMNS)}")
        for row_no, row in enumerate(reader, start=1):
            if len(row) != len(PREDICTION_COLUMNS):
                raise DataError(f"{path}: row {row_no}: expected {len(PREDICTION_COLUMNS)} fields, got {len(row)}")
            try:
                wid, horizon = int(row[0]), int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from exc
            if horizon < 1 or (wid, horizon) in rows:
                raise DataError(f"{path}: row {row_no}: bad or duplicate (window_id, horizon) = ({wid}, {horizon})")
            rows[(wid, horizon)] = vals
    if not rows:
        raise DataError(f"{path}: no prediction rows")
    ids = sorted({w for w, _ in rows})
    d = max(h for _, h in rows)
    missing = [(w, h) for w in ids for h in range(1, d + 1) if (w, h) not in rows]
    if missing:
        raise DataError(f"{path}: missing rows for (window_id, horizon) {missing[:5]}")
    table = np.array([[rows[(w, h)] for h in range(1, d + 1)] for w in ids])  # (N, d, 7)
    mean, var_model, var_noise, var_total, lo, hi, actual = np.moveaxis(table, 2, 0)
    summary = PredictiveSummary(mean, var_model, var_noise, var_total, lo, hi, scale="original",
                                window_ids=np.array(ids))
    return summary, actual
