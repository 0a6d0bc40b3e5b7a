"""Hourly demand series: synthetic generation, CSV I/O, preprocessing and windowing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DataError

HOURS_PER_DAY = 24
DAYS_PER_WEEK = 7
N_CALENDAR = HOURS_PER_DAY + DAYS_PER_WEEK + 1
CSV_HEADER = ("timestamp", "value", "is_holiday")

_ONE_HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class SeriesFrame:
    """Contiguous hourly demand with a per-hour holiday indicator."""

    timestamps: np.ndarray  # datetime64[h]
    values: np.ndarray
    holiday_flags: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[h]")
        values = np.asarray(self.values, dtype=np.float64)
        flags = np.asarray(self.holiday_flags, dtype=bool)
        if not (ts.ndim == values.ndim == flags.ndim == 1):
            raise DataError("series fields must be one-dimensional")
        if not (len(ts) == len(values) == len(flags)):
            raise DataError(
                f"length mismatch: {len(ts)} timestamps, {len(values)} values, "
                f"{len(flags)} holiday flags"
            )
        steps = np.diff(ts)
        bad = np.flatnonzero(steps != _ONE_HOUR)
        if bad.size:
            k = int(bad[0]) + 1
            raise DataError(f"timestamps not contiguous at index {k}: {ts[k]} follows {ts[k - 1]}")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite demand value")
        if np.any(values < 0):
            k = int(np.flatnonzero(values < 0)[0])
            raise DataError(f"negative demand value {values[k]} at index {k}")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "holiday_flags", flags)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the log-space synthetic demand generator.

    ``holidays`` holds ``(iso_date, multiplier)`` pairs; every hour of that
    date has its demand scaled by ``multiplier``.
    """

    num_hours: int = 8064
    start: str = "2017-01-02T00"
    level: float = 5.0
    daily_amplitude: float = 0.6
    daily_peak_hour: float = 18.0
    weekday_effects: tuple[float, ...] = (0.0, 0.02, 0.04, 0.06, 0.15, 0.25, -0.1)
    noise_std: float = 0.08
    ar_coef: float = 0.6
    holidays: tuple[tuple[str, float], ...] = (
        ("2017-01-16", 0.6),
        ("2017-02-20", 1.5),
        ("2017-03-17", 1.6),
        ("2017-04-14", 0.6),
        ("2017-05-29", 0.5),
        ("2017-07-04", 0.5),
        ("2017-08-07", 1.5),
        ("2017-09-04", 0.6),
        ("2017-10-09", 1.5),
        ("2017-10-31", 1.6),
        ("2017-11-10", 0.6),
        ("2017-11-23", 0.5),
    )

    def __post_init__(self):
        if self.num_hours < HOURS_PER_DAY * 28:
            raise ConfigError(f"num_hours must be at least {HOURS_PER_DAY * 28}, got {self.num_hours}")
        if len(self.weekday_effects) != DAYS_PER_WEEK:
            raise ConfigError("weekday_effects needs exactly 7 entries (Monday first)")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        if not -1.0 < self.ar_coef < 1.0:
            raise ConfigError("ar_coef must lie in (-1, 1)")
        first = _parse_hour(self.start)
        last = first + (self.num_hours - 1) * _ONE_HOUR
        for date, mult in self.holidays:
            day = np.datetime64(date, "D")
            if not (first.astype("datetime64[D]") <= day <= last.astype("datetime64[D]")):
                raise ConfigError(f"holiday {date} outside generated range {first} .. {last}")
            if mult <= 0:
                raise ConfigError(f"holiday multiplier must be positive, got {mult} for {date}")

    def holiday_dates(self) -> list[np.datetime64]:
        return [np.datetime64(date, "D") for date, _ in self.holidays]


def _parse_hour(text: str) -> np.datetime64:
    try:
        stamp = datetime.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {text!r}") from exc
    if stamp.minute or stamp.second or stamp.microsecond:
        raise DataError(f"timestamp {text!r} is not on an hour boundary")
    if stamp.tzinfo is not None:
        stamp = stamp.replace(tzinfo=None)
    return np.datetime64(stamp, "h")


def generate_synthetic(config: SynthConfig, seed: int) -> SeriesFrame:
    """Draw a demand series whose log is seasonal mean plus AR(1) noise.

    log v_t = level + daily sinusoid + weekday effect + log(holiday multiplier) + e_t
    with e_t = ar_coef * e_{t-1} + noise_std * z_t, started from the
    stationary distribution.
    """
    rng = np.random.default_rng(seed)
    n = config.num_hours
    ts = _parse_hour(config.start) + np.arange(n) * _ONE_HOUR
    hour = hour_of_day(ts)
    dow = day_of_week(ts)

    log_v = np.full(n, config.level, dtype=np.float64)
    log_v += config.daily_amplitude * np.cos(2.0 * np.pi * (hour - config.daily_peak_hour) / HOURS_PER_DAY)
    log_v += np.asarray(config.weekday_effects, dtype=np.float64)[dow]

    days = ts.astype("datetime64[D]")
    flags = np.zeros(n, dtype=bool)
    for date, mult in config.holidays:
        on = days == np.datetime64(date, "D")
        flags |= on
        log_v[on] += math.log(mult)

    z = rng.standard_normal(n)
    if config.noise_std > 0:
        noise = np.empty(n)
        phi = config.ar_coef
        noise[0] = config.noise_std * z[0] / math.sqrt(1.0 - phi * phi)
        for t in range(1, n):
            noise[t] = phi * noise[t - 1] + config.noise_std * z[t]
        log_v += noise
    return SeriesFrame(ts, np.exp(log_v), flags)


def hour_of_day(ts: np.ndarray) -> np.ndarray:
    ts = np.asarray(ts, dtype="datetime64[h]")
    return (ts - ts.astype("datetime64[D]")).astype(np.int64)


def day_of_week(ts: np.ndarray) -> np.ndarray:
    """Monday = 0."""
    days = np.asarray(ts, dtype="datetime64[h]").astype("datetime64[D]").astype(np.int64)
    # 1970-01-01 was a Thursday
    return (days + 3) % DAYS_PER_WEEK


def load_csv(path: str | Path) -> SeriesFrame:
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    stamps, values, flags = [], [], []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for row_no, row in enumerate(reader, start=1):
            if len(row) != 3:
                raise DataError(f"{path}: row {row_no}: expected 3 fields, got {len(row)}")
            try:
                stamp = _parse_hour(row[0].strip())
                value = float(row[1])
                flag = int(row[2])
            except (DataError, ValueError) as exc:
                raise DataError(f"{path}: row {row_no}: {exc}") from exc
            if flag not in (0, 1):
                raise DataError(f"{path}: row {row_no}: is_holiday must be 0 or 1, got {flag}")
            if not math.isfinite(value) or value < 0:
                raise DataError(f"{path}: row {row_no}: invalid demand value {row[1]!r}")
            if stamps:
                step = stamp - stamps[-1]
                if step == np.timedelta64(0, "h"):
                    raise DataError(f"{path}: row {row_no}: duplicate timestamp {stamp}")
                if step != _ONE_HOUR:
                    raise DataError(f"{path}: row {row_no}: gap or disorder, {stamp} follows {stamps[-1]}")
            stamps.append(stamp)
            values.append(value)
            flags.append(bool(flag))
    return SeriesFrame(np.array(stamps, dtype="datetime64[h]"), np.array(values), np.array(flags))


def write_csv(series: SeriesFrame, path: str | Path) -> None:
    stamps = np.datetime_as_string(series.timestamps.astype("datetime64[s]"), unit="s")
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for stamp, value, flag in zip(stamps, series.values, series.holiday_flags):
            writer.writerow((stamp, repr(float(value)), int(flag)))


@dataclass(frozen=True)
class Transform:
    """log1p followed by a z-score with statistics from the training hours."""

    mean: float
    std: float
    kind: str = "log1p-zscore"

    def __post_init__(self):
        if not self.std > 0:
            raise DataError(f"transform std must be positive, got {self.std}")

    def forward(self, values):
        return (np.log1p(values) - self.mean) / self.std

    def inverse(self, z):
        return np.expm1(np.asarray(z) * self.std + self.mean)

    @classmethod
    def identity(cls) -> "IdentityTransform":
        return IdentityTransform()


class IdentityTransform:
    kind = "identity"
    mean = 0.0
    std = 1.0

    def forward(self, values):
        return np.asarray(values, dtype=np.float64)

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64)


def fit_transform(train_values: Sequence[float]) -> Transform:
    """Estimate the log1p z-score transform from training-period values."""
    v = np.asarray(train_values, dtype=np.float64)
    if v.size == 0:
        raise DataError("cannot fit a transform on an empty series")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise DataError("transform requires finite nonnegative values")
    logs = np.log1p(v)
    mean = float(logs.mean())
    std = float(logs.std())
    if std == 0.0:
        raise DataError(f"constant series (log1p mean {mean}) has zero spread")
    return Transform(mean=mean, std=std)


def calendar_channels(timestamps: np.ndarray, holiday_flags: np.ndarray) -> np.ndarray:
    """(T, 32) one-hot hour-of-day, one-hot day-of-week, holiday indicator."""
    n = len(timestamps)
    cal = np.zeros((n, N_CALENDAR), dtype=np.float64)
    rows = np.arange(n)
    cal[rows, hour_of_day(timestamps)] = 1.0
    cal[rows, HOURS_PER_DAY + day_of_week(timestamps)] = 1.0
    cal[:, -1] = np.asarray(holiday_flags, dtype=np.float64)
    return cal


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised windows over one series.

    ``inputs`` is (N, C, L_in) and is usually a read-only strided view of the
    channel matrix; index it per batch rather than copying it whole.
    """

    inputs: np.ndarray
    targets: np.ndarray
    target_calendar: np.ndarray
    starts: np.ndarray
    input_length: int
    horizon: int
    timestamps: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.starts)

    @property
    def n_windows(self) -> int:
        return len(self.starts)

    @property
    def target_index(self) -> np.ndarray:
        """(N, d) series index of every prediction hour."""
        return self.starts[:, None] + self.input_length + np.arange(self.horizon)

    @property
    def target_times(self) -> np.ndarray:
        return self.timestamps[self.target_index]

    def subset(self, index) -> "WindowedDataset":
        if isinstance(index, slice):
            inputs = self.inputs[index]
        else:
            inputs = self.inputs[np.asarray(index)]
        return WindowedDataset(
            inputs=inputs,
            targets=self.targets[index],
            target_calendar=self.target_calendar[index],
            starts=self.starts[index],
            input_length=self.input_length,
            horizon=self.horizon,
            timestamps=self.timestamps,
        )


def window_count(n_hours: int, input_length: int, horizon: int, stride: int = 1) -> int:
    return (n_hours - input_length - horizon) // stride + 1


def make_windows(series: SeriesFrame, transform, L_in: int = 144, d: int = 6, stride: int = 1) -> WindowedDataset:
    if L_in < 1 or d < 1 or stride < 1:
        raise ConfigError("window lengths and stride must be positive")
    if len(series) < L_in + d:
        raise DataError(f"series of {len(series)} hours is shorter than L_in + d = {L_in + d}")
    n = window_count(len(series), L_in, d, stride)
    z = transform.forward(series.values)
    cal = calendar_channels(series.timestamps, series.holiday_flags)
    channels = np.vstack([z[None, :], cal.T])
    channels.setflags(write=False)
    views = sliding_window_view(channels, L_in, axis=1)[:, : (n - 1) * stride + 1 : stride]
    starts = np.arange(n) * stride
    tidx = starts[:, None] + L_in + np.arange(d)
    return WindowedDataset(
        inputs=views.transpose(1, 0, 2),
        targets=z[tidx],
        target_calendar=cal[tidx],
        starts=starts,
        input_length=L_in,
        horizon=d,
        timestamps=series.timestamps,
    )


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = n // 2
    n_val = n // 4
    return n_train, n_val, n - n_train - n_val


def split_sequential(dataset: WindowedDataset, drop_straddle: bool = True):
    """Chronological 50/25/25 split of the windows.

    With ``drop_straddle`` the leading windows of val and test whose inputs
    overlap the previous split's prediction hours are discarded.
    """
    n = len(dataset)
    if n < 4:
        raise DataError(f"need at least 4 windows to split, got {n}")
    n_train, n_val, _ = split_sizes(n)
    bounds = [(0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)]
    parts = []
    last_target = None
    for lo, hi in bounds:
        idx = np.arange(lo, hi)
        if drop_straddle and last_target is not None:
            idx = idx[dataset.starts[idx] > last_target]
            if idx.size == 0:
                raise DataError("split left empty after dropping windows that straddle a boundary")
        if idx.size:
            last_target = int(dataset.starts[idx[-1]]) + dataset.input_length + dataset.horizon - 1
        parts.append(dataset.subset(slice(int(idx[0]), int(idx[-1]) + 1)))
    return tuple(parts)


def prepare_splits(series: SeriesFrame, L_in: int = 144, d: int = 6, stride: int = 1):
    """Fit the transform on the training hours only, then window and split.

    Returns ``(transform, train, val, test)``.
    """
    n = window_count(len(series), L_in, d, stride)
    if n < 4:
        raise DataError(f"series of {len(series)} hours yields only {max(n, 0)} windows")
    n_train = split_sizes(n)[0]
    train_end = (n_train - 1) * stride + L_in + d
    transform = fit_transform(series.values[:train_end])
    dataset = make_windows(series, transform, L_in=L_in, d=d, stride=stride)
    return (transform, *split_sequential(dataset))
