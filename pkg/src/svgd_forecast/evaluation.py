"""Forecast metrics: WMAPE and empirical interval coverage."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

METRIC_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "model_tag", "n_windows", "wmape_overall", "wmape_per_horizon", "coverage_overall", "coverage_per_horizon",
    ],
    "properties": {
        "model_tag": {"type": "string"},
        "n_windows": {"type": "integer", "minimum": 0},
        "wmape_overall": {"type": "number", "minimum": 0},
        "wmape_per_horizon": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "coverage_overall": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "coverage_per_horizon": {
            "type": ["array", "null"], "items": {"type": "number", "minimum": 0, "maximum": 1},
        },
    },
    "additionalProperties": False,
}


def wmape(y, yhat) -> float:
    """sum |y - yhat| / sum |y|."""
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ContractError(f"length mismatch: {y.size} targets vs {yhat.size} predictions")
    denom = np.abs(y).sum()
    if denom == 0:
        raise DataError("WMAPE is undefined when every target is zero")
    return float(np.abs(y - yhat).sum() / denom)


def coverage(y, lo, hi) -> float:
    """Fraction of targets inside the closed interval [lo, hi]."""
    y, lo, hi = (np.asarray(a, dtype=np.float64).ravel() for a in (y, lo, hi))
    if not (y.shape == lo.shape == hi.shape):
        raise ContractError("coverage inputs differ in length")
    if np.any(lo > hi):
        k = int(np.flatnonzero(lo > hi)[0])
        raise ContractError(f"interval lower bound exceeds upper bound at index {k}")
    return float(np.mean((lo <= y) & (y <= hi)))


@dataclass(frozen=True)
class MetricReport:
    wmape_overall: float
    wmape_per_horizon: list
    coverage_overall: float | None
    coverage_per_horizon: list | None
    n_windows: int
    model_tag: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(self.to_json())
        if csv_path is not None:
            with Path(csv_path).open("w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(("horizon", "wmape", "coverage"))
                cov = self.coverage_per_horizon or [""] * len(self.wmape_per_horizon)
                for j, (w, c) in enumerate(zip(self.wmape_per_horizon, cov), start=1):
                    writer.writerow((j, repr(w), repr(c) if c != "" else ""))

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def evaluate_arrays(actual, mean, lo=None, hi=None, model_tag: str = "BNN") -> MetricReport:
    """Metrics from original-scale (N, d) arrays; overall WMAPE is the horizon average."""
    actual = np.asarray(actual, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if actual.ndim != 2 or actual.shape != mean.shape:
        raise ContractError(f"expected matching (N, d) arrays, got {actual.shape} and {mean.shape}")
    per_w = [wmape(actual[:, j], mean[:, j]) for j in range(actual.shape[1])]
    per_c = None
    cov_all = None
    if lo is not None and hi is not None:
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        per_c = [coverage(actual[:, j], lo[:, j], hi[:, j]) for j in range(actual.shape[1])]
        cov_all = float(np.mean(per_c))
    return MetricReport(
        wmape_overall=float(np.mean(per_w)),
        wmape_per_horizon=per_w,
        coverage_overall=cov_all,
        coverage_per_horizon=per_c,
        n_windows=int(actual.shape[0]),
        model_tag=model_tag,
    )


def evaluate(model_outputs, test_set, transform, model_tag: str = "BNN") -> MetricReport:
    """Score a transformed-scale PredictiveSummary against a test split.

    Window ids index ``test_set`` positionally; every window must be present.
    """
    n = len(test_set)
    ids = model_outputs.window_ids
    ids = np.arange(len(model_outputs.mean)) if ids is None else np.asarray(ids)
    missing = sorted(set(range(n)) - set(ids.tolist()))
    if missing:
        raise ContractError(f"no predictions for test windows {missing[:20]}{' ...' if len(missing) > 20 else ''}")
    order = np.argsort(ids, kind="stable")[:n]
    if model_outputs.scale == "transformed":
        mean = transform.inverse(model_outputs.mean[order])
        lo = transform.inverse(model_outputs.lo[order])
        hi = transform.inverse(model_outputs.hi[order])
    else:
        mean, lo, hi = model_outputs.mean[order], model_outputs.lo[order], model_outputs.hi[order]
    actual = transform.inverse(test_set.targets)
    return evaluate_arrays(actual, mean, lo, hi, model_tag)


def holiday_spans(test_set, holiday_dates, width_hours: int = 72):
    """Pairs of (holiday, matched) masks over the (N, d) prediction cells.

    The holiday span is ``width_hours`` centred on each holiday date. The
    matched span is the same span shifted a week back (or forward), kept
    only if it lies in the split and contains no holiday day.
    """
    times = test_set.target_times
    lo_t, hi_t = times.min(), times.max()
    hol_days = {np.datetime64(d, "D") for d in holiday_dates}
    hol_array = np.array(sorted(hol_days), dtype="datetime64[D]")
    pad = np.timedelta64((width_hours - 24) // 2, "h")
    pairs = []
    for day in sorted(hol_days):
        start = day.astype("datetime64[h]") - pad
        stop = start + np.timedelta64(width_hours, "h")
        if start < lo_t or stop - np.timedelta64(1, "h") > hi_t:
            continue
        for shift in (-7, 7, -14, 14):
            s2 = start + np.timedelta64(24 * shift, "h")
            e2 = stop + np.timedelta64(24 * shift, "h")
            if s2 < lo_t or e2 - np.timedelta64(1, "h") > hi_t:
                continue
            span_days = np.arange(s2, e2, np.timedelta64(1, "h")).astype("datetime64[D]")
            if np.isin(span_days, hol_array).any():
                continue
            pairs.append((day, (times >= start) & (times < stop), (times >= s2) & (times < e2)))
            break
    return pairs


def anomaly_uncertainty_gap(summary, test_set, holiday_dates, width_hours: int = 72):
    """Mean predicted total std near holidays vs. matched ordinary days.

    Returns ``(holiday_std, matched_std, n_pairs)``.
    """
    pairs = holiday_spans(test_set, holiday_dates, width_hours)
    if not pairs:
        raise DataError("no holiday in the split has a complete span and a matched ordinary span")
    std = np.sqrt(summary.var_total)
    hol = np.concatenate([std[m] for _, m, _ in pairs])
    ref = np.concatenate([std[m] for _, _, m in pairs])
    return float(hol.mean()), float(ref.mean()), len(pairs)
