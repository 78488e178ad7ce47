"""Checking detected change-points against station metadata.

A detection is validated when a documented equipment or processing change
lies within ``window_days`` of it; each documented change validates at most
one detection. Pairs of close, opposite-sign breaks caused by noise spikes are
flagged as outliers.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import DataError, Segmentation

CHANGE_TYPES = ("R", "A", "D", "P")
DEFAULT_WINDOW = 30


@dataclass(frozen=True)
class MetadataEvent:
    date: np.datetime64
    types: tuple

    @property
    def label(self) -> str:
        return "+".join(self.types)


@dataclass(frozen=True)
class MetadataLog:
    """Documented changes of one station, grouped by date."""

    events: tuple = ()
    station: str = ""

    @classmethod
    def from_records(cls, records: Iterable[tuple], station: str = "") -> "MetadataLog":
        by_date = defaultdict(set)
        for date, kind in records:
            kind = str(kind).strip().upper()
            if kind not in CHANGE_TYPES:
                raise DataError(f"unknown change type {kind!r}; expected one of {CHANGE_TYPES}")
            try:
                d = np.datetime64(str(date).strip(), "D")
            except ValueError:
                raise DataError(f"unparseable metadata date {date!r}") from None
            by_date[d].add(kind)
        events = tuple(
            MetadataEvent(d, tuple(t for t in CHANGE_TYPES if t in kinds)) for d, kinds in sorted(by_date.items())
        )
        return cls(events, station)

    def __len__(self) -> int:
        return len(self.events)


def read_metadata_csv(path: str | Path) -> dict[str, MetadataLog]:
    """Parse ``station,date,type`` rows into one log per station."""
    rows = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip().lower() for h in next(reader, [])]
        if header != ["station", "date", "type"]:
            raise DataError(f"{path}:1: expected header 'station,date,type'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            rows[row[0].strip()].append((row[1], row[2]))
    out = {}
    for station, recs in rows.items():
        try:
            out[station] = MetadataLog.from_records(recs, station)
        except DataError as exc:
            raise DataError(f"{path}: station {station}: {exc}") from None
    return out


@dataclass
class DetectionCheck:
    date: np.datetime64
    offset: float
    nearest_date: np.datetime64 | None
    nearest_type: str
    distance: int | None
    validated: bool
    outlier: bool


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)
    window_days: int = DEFAULT_WINDOW

    @property
    def detections(self) -> int:
        return len(self.checks)

    @property
    def outliers(self) -> int:
        return sum(c.outlier for c in self.checks)

    @property
    def validations(self) -> int:
        return sum(c.validated for c in self.checks)

    @property
    def percent_validated(self) -> float:
        return 100.0 * self.validations / self.detections if self.detections else 0.0

    @property
    def percent_validated_without_outliers(self) -> float:
        clean = [c for c in self.checks if not c.outlier]
        return 100.0 * sum(c.validated for c in clean) / len(clean) if clean else 0.0


def validate(
    detections: Sequence[tuple],
    metadata: MetadataLog,
    window_days: int = DEFAULT_WINDOW,
    outliers: Sequence[bool] | None = None,
) -> ValidationReport:
    """Match ``(date, offset)`` detections to metadata events.

    Matching is one-to-one and greedy by increasing absolute day distance.
    Signed distances are detection minus event, in days.
    """
    dets = [(np.datetime64(str(d), "D"), float(o)) for d, o in detections]
    flags = [False] * len(dets) if outliers is None else [bool(x) for x in outliers]
    if len(flags) != len(dets):
        raise ValueError("one outlier flag per detection expected")
    ev_dates = np.array([e.date for e in metadata.events], dtype="datetime64[D]")
    checks = []
    pairs = []
    for i, (d, off) in enumerate(dets):
        if ev_dates.size:
            dist = (d - ev_dates).astype(int)
            j = int(np.argmin(np.abs(dist)))
            ev = metadata.events[j]
            checks.append(DetectionCheck(d, off, ev.date, ev.label, int(dist[j]), False, flags[i]))
            pairs += [(abs(int(x)), i, k) for k, x in enumerate(dist) if abs(x) <= window_days]
        else:
            checks.append(DetectionCheck(d, off, None, "", None, False, flags[i]))
    used_det, used_ev = set(), set()
    for dist, i, k in sorted(pairs):
        if i in used_det or k in used_ev:
            continue
        used_det.add(i)
        used_ev.add(k)
        ev = metadata.events[k]
        c = checks[i]
        c.validated = True
        c.nearest_date = ev.date
        c.nearest_type = ev.label
        c.distance = int((c.date - ev.date).astype(int))
    return ValidationReport(checks, window_days)


def classify_outliers(
    segmentation: Segmentation,
    dates,
    local_sigma,
    gap_days: int = 30,
    amp_factor: float = 2.0,
) -> np.ndarray:
    """Flag change-point pairs that bound a short spike segment.

    The two breaks around a segment lasting at most ``gap_days`` calendar days
    are outliers when their offsets have opposite signs and both exceed
    ``amp_factor`` times the mean noise std over the segment.
    """
    cps = segmentation.changepoints
    flags = np.zeros(cps.size, bool)
    dates = np.asarray(dates, dtype="datetime64[D]")
    sd = np.asarray(local_sigma, float)
    mu = segmentation.means
    for k in range(cps.size - 1):
        start, stop = cps[k], cps[k + 1]
        span = int((dates[stop - 1] - dates[start]).astype(int)) + 1
        if span > gap_days:
            continue
        up = mu[k + 1] - mu[k]
        down = mu[k + 2] - mu[k + 1]
        level = amp_factor * float(np.mean(sd[start:stop]))
        if up * down < 0 and abs(up) > level and abs(down) > level:
            flags[k] = flags[k + 1] = True
    return flags


SUMMARY_COLUMNS = ("criterion", "Nsta", "min", "mean", "max", "detections", "outliers", "validations",
                   "pct_validated", "pct_validated_without_outliers")


def summarize(per_station: dict[str, ValidationReport], criterion: str = "") -> dict:
    """Aggregate row in the layout of a per-criterion comparison table."""
    counts = [r.detections for r in per_station.values()]
    det = sum(counts)
    out_ = sum(r.outliers for r in per_station.values())
    val = sum(r.validations for r in per_station.values())
    clean = [c for r in per_station.values() for c in r.checks if not c.outlier]
    return {
        "criterion": criterion,
        "Nsta": sum(c > 0 for c in counts),
        "min": min(counts) if counts else 0,
        "mean": float(np.mean(counts)) if counts else 0.0,
        "max": max(counts) if counts else 0,
        "detections": det,
        "outliers": out_,
        "validations": val,
        "pct_validated": 100.0 * val / det if det else 0.0,
        "pct_validated_without_outliers": 100.0 * sum(c.validated for c in clean) / len(clean) if clean else 0.0,
    }
