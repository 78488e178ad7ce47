"""Shared data model: dated series, month indexing, segmentations, Fourier models."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

YEAR_LENGTH = 365.25


class DataError(ValueError):
    """Raised for invalid input data (bad dates, duplicates, empty series...)."""


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Dated observations, stored compactly (gaps are simply absent dates).

    ``month_labels`` and ``phase`` override the calendar-derived values; the
    simulation uses them to impose its pseudo-calendar.
    """

    dates: np.ndarray
    values: np.ndarray
    month_labels: np.ndarray | None = None
    phase: np.ndarray | None = None
    dropped: int = 0

    def __post_init__(self):
        dates = _frozen(self.dates, "datetime64[D]")
        values = _frozen(self.values, float)
        if dates.ndim != 1 or dates.shape != values.shape:
            raise DataError("dates and values must be 1-d arrays of equal length")
        if dates.size == 0:
            raise DataError("time series is empty")
        if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
            raise DataError("dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DataError("values must be finite")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)
        if self.month_labels is not None:
            labels = _frozen(self.month_labels, int)
            if labels.shape != values.shape or labels.min() < 1 or labels.max() > 12:
                raise DataError("month labels must be in 1..12, one per observation")
            object.__setattr__(self, "month_labels", labels)
        if self.phase is not None:
            phase = _frozen(self.phase, float)
            if phase.shape != values.shape:
                raise DataError("phase must have one entry per observation")
            object.__setattr__(self, "phase", phase)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.n

    def day_phase(self) -> np.ndarray:
        """Position within the year used by the periodic bias (day-of-year, 1..366)."""
        if self.phase is not None:
            return self.phase
        return day_of_year(self.dates)

    def day_numbers(self) -> np.ndarray:
        """Integer day count of each timestamp (used for adjacency tests)."""
        return self.dates.astype("int64")


def day_of_year(dates: np.ndarray) -> np.ndarray:
    dates = np.asarray(dates, dtype="datetime64[D]")
    years = dates.astype("datetime64[Y]").astype("datetime64[D]")
    return (dates - years).astype(int).astype(float) + 1.0


def calendar_months(dates: np.ndarray) -> np.ndarray:
    dates = np.asarray(dates, dtype="datetime64[D]")
    return dates.astype("datetime64[M]").astype(int) % 12 + 1


def _parse_date(raw) -> np.datetime64:
    try:
        return np.datetime64(str(raw).strip(), "D")
    except ValueError as exc:
        raise DataError(f"unparseable date {raw!r}") from exc


def ingest(records: Iterable[tuple], **overrides) -> TimeSeries:
    """Build a TimeSeries from ``(date, value)`` pairs.

    Records are sorted by date; non-finite values are dropped and counted in
    ``TimeSeries.dropped``. Duplicate dates are rejected.
    """
    parsed = []
    dropped = 0
    for date, value in records:
        d = _parse_date(date)
        try:
            v = float(value)
        except (TypeError, ValueError):
            v = math.nan
        if not math.isfinite(v):
            dropped += 1
            continue
        parsed.append((d, v))
    if not parsed:
        raise DataError("no valid observations after filtering")
    parsed.sort(key=lambda r: r[0])
    dates = np.array([d for d, _ in parsed], dtype="datetime64[D]")
    dup = np.nonzero(np.diff(dates) == np.timedelta64(0, "D"))[0]
    if dup.size:
        raise DataError(f"duplicate date {dates[dup[0]]}")
    values = np.array([v for _, v in parsed])
    return TimeSeries(dates, values, dropped=dropped, **overrides)


def read_series_csv(path: str | Path) -> TimeSeries:
    """Read ``date,value`` or ``date,gnss,erai`` CSV (value = gnss - erai).

    Empty or non-numeric value cells count as missing and are dropped.
    """
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:2] == ["date", "value"] and len(header) == 2:
            diff = False
        elif header == ["date", "gnss", "erai"]:
            diff = True
        else:
            raise DataError(f"{path}:1: expected header 'date,value' or 'date,gnss,erai'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                date = _parse_date(row[0])
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if diff:
                value = _to_float(row[1]) - _to_float(row[2])
            else:
                value = _to_float(row[1])
            records.append((date, value))
    try:
        return ingest(records)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def _to_float(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return math.nan


@dataclass(frozen=True, eq=False)
class MonthIndex:
    labels: np.ndarray
    counts: np.ndarray

    def weights(self, sigma: "MonthlyStd") -> np.ndarray:
        """Per-observation weights 1/sigma^2 of the observation's month."""
        return 1.0 / sigma.per_index(self) ** 2


def month_index(series: TimeSeries) -> MonthIndex:
    labels = series.month_labels if series.month_labels is not None else calendar_months(series.dates)
    counts = np.bincount(labels, minlength=13)[1:]
    return MonthIndex(_frozen(labels, int), _frozen(counts, int))


@dataclass(frozen=True, eq=False)
class MonthlyStd:
    """Twelve monthly noise standard deviations.

    Months without data hold NaN and are flagged False in ``present``.
    """

    sigma: np.ndarray
    source: str = "provided"
    present: np.ndarray | None = None

    def __post_init__(self):
        sigma = _frozen(self.sigma, float)
        if sigma.shape != (12,):
            raise ValueError("sigma must hold 12 monthly values")
        present = np.isfinite(sigma) if self.present is None else np.asarray(self.present, bool)
        if not np.all(sigma[present] > 0):
            raise ValueError("monthly standard deviations must be > 0")
        if self.source == "homogeneous" and np.unique(sigma[present]).size > 1:
            raise ValueError("homogeneous std must be equal across months")
        if self.source not in ("robust-estimated", "homogeneous", "provided", "updated"):
            raise ValueError(f"unknown std source {self.source!r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "present", _frozen(present, bool))

    @classmethod
    def constant(cls, value: float, source: str = "provided") -> "MonthlyStd":
        return cls(np.full(12, float(value)), source)

    def per_index(self, months: MonthIndex) -> np.ndarray:
        s = self.sigma[months.labels - 1]
        if not np.all(np.isfinite(s)):
            raise ValueError("series contains months without a standard deviation")
        return s


@dataclass(frozen=True, eq=False)
class Segmentation:
    """K segments; ``changepoints`` are the right ends t_1..t_{K-1} (counts of
    observations before each break), so segment k covers ``[t_{k-1}, t_k)`` in
    0-based indexing."""

    changepoints: np.ndarray
    means: np.ndarray
    n: int

    def __post_init__(self):
        cps = _frozen(self.changepoints, int)
        means = _frozen(self.means, float)
        bounds = np.concatenate(([0], cps, [self.n]))
        if np.any(np.diff(bounds) < 1):
            raise ValueError("change-points must satisfy 0 < t_1 < ... < t_{K-1} < n")
        if means.size != cps.size + 1:
            raise ValueError("need exactly K means")
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "means", means)

    @property
    def K(self) -> int:
        return int(self.means.size)

    @property
    def bounds(self) -> np.ndarray:
        return np.concatenate(([0], self.changepoints, [self.n]))

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.bounds)

    def fitted(self) -> np.ndarray:
        """Piecewise-constant mean per observation."""
        return np.repeat(self.means, self.segment_lengths)


@dataclass(frozen=True, eq=False)
class FourierModel:
    order: int = 4
    period: float = YEAR_LENGTH
    coeffs: np.ndarray = field(default=None)
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be >= 0")
        coeffs = np.zeros((self.order, 2)) if self.coeffs is None else np.array(self.coeffs, float)
        coeffs = coeffs.reshape(self.order, 2)
        active = np.ones((self.order, 2), bool) if self.active is None else np.array(self.active, bool)
        active = active.reshape(self.order, 2)
        coeffs = np.where(active, coeffs, 0.0)
        object.__setattr__(self, "coeffs", _frozen(coeffs))
        object.__setattr__(self, "active", _frozen(active))

    @classmethod
    def zero(cls, period: float = YEAR_LENGTH) -> "FourierModel":
        return cls(order=0, period=period)

    @property
    def a(self) -> np.ndarray:
        return self.coeffs[:, 0]

    @property
    def b(self) -> np.ndarray:
        return self.coeffs[:, 1]

    def evaluate(self, phase) -> np.ndarray:
        return evaluate_fourier(self, phase)


def harmonic_columns(phase, order: int, period: float) -> np.ndarray:
    """Design matrix with columns cos(w_1 t), sin(w_1 t), cos(w_2 t), ..."""
    phase = np.asarray(phase, float)
    out = np.empty((phase.size, 2 * order))
    for i in range(1, order + 1):
        w = 2.0 * np.pi * i / period
        out[:, 2 * i - 2] = np.cos(w * phase)
        out[:, 2 * i - 1] = np.sin(w * phase)
    return out


def evaluate_fourier(model: FourierModel, phase) -> np.ndarray:
    phase = np.asarray(phase, float)
    if model.order == 0:
        return np.zeros(phase.shape)
    X = harmonic_columns(phase.ravel(), model.order, model.period)
    return (X @ model.coeffs.ravel()).reshape(phase.shape)


def segmentation_from_changepoints(changepoints: Sequence[int], z, weights) -> Segmentation:
    """Segmentation whose means are the weighted means of ``z`` on each segment."""
    z = np.asarray(z, float)
    w = np.asarray(weights, float)
    bounds = np.concatenate(([0], np.asarray(changepoints, int), [z.size]))
    if np.any(np.diff(bounds) < 1):
        raise ValueError("change-points must satisfy 0 < t_1 < ... < t_{K-1} < n")
    sw = np.add.reduceat(w, bounds[:-1])
    swz = np.add.reduceat(w * z, bounds[:-1])
    return Segmentation(np.asarray(changepoints, int), swz / sw, z.size)
