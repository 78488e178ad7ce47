"""Simulation study: synthetic series, quality criteria and batch runner."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import TimeSeries
from .inference import InferenceOptions, infer_all_k, thread_count
from .selection import CRITERIA, normalize_criterion, select_from_inference

log = logging.getLogger(__name__)

TRUE_K = "True"
SIGMA2_GRID = tuple(round(0.1 + 0.2 * i, 1) for i in range(8))
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
EPOCH = np.datetime64("2000-01-01")


@dataclass(frozen=True)
class SimConfig:
    n: int = 400
    days_per_month: int = 50
    months_per_year: int = 2
    changepoints: tuple = (55, 77, 177, 222, 300, 366)
    amplitude: float = 0.7
    period: float = 100.0
    sigma1: float = 0.5
    sigma2: float = 0.5
    replicates: int = 100
    seed: int = 0

    def __post_init__(self):
        cps = np.asarray(self.changepoints)
        if cps.size and (np.any(np.diff(cps) <= 0) or cps[0] <= 0 or cps[-1] >= self.n):
            raise ValueError("change-points must be strictly increasing within (0, n)")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.replicates < 0:
            raise ValueError("replicates must be >= 0")

    @property
    def K(self) -> int:
        return len(self.changepoints) + 1

    @property
    def years(self) -> float:
        return self.n / (self.days_per_month * self.months_per_year)


@dataclass(frozen=True, eq=False)
class Truth:
    changepoints: np.ndarray
    mu: np.ndarray
    f: np.ndarray
    sigma: np.ndarray
    month_sigma: tuple


def pseudo_months(config: SimConfig) -> np.ndarray:
    t = np.arange(config.n)
    return (t // config.days_per_month) % config.months_per_year + 1


def true_mean(config: SimConfig) -> np.ndarray:
    lengths = np.diff(np.concatenate(([0], np.asarray(config.changepoints, int), [config.n])))
    levels = np.arange(config.K) % 2
    return np.repeat(levels.astype(float), lengths)


def generate(config: SimConfig, seed=None) -> tuple[TimeSeries, Truth]:
    """One synthetic series y_t = mu*_t + f*_t + eps_t on the pseudo-calendar.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    t = np.arange(1, config.n + 1, dtype=float)
    months = pseudo_months(config)
    month_sigma = (config.sigma1, config.sigma2) if config.months_per_year == 2 else (config.sigma1,) * config.months_per_year
    sd = np.asarray(month_sigma, float)[months - 1]
    mu = true_mean(config)
    f = config.amplitude * np.cos(2 * np.pi * t / config.period)
    y = mu + f + sd * rng.standard_normal(config.n)
    dates = EPOCH + np.arange(config.n).astype("timedelta64[D]")
    series = TimeSeries(dates, y, month_labels=months, phase=t)
    return series, Truth(np.asarray(config.changepoints, int), mu, f, sd, tuple(month_sigma))


def hausdorff(truth: Sequence[int], est: Sequence[int]) -> tuple[float, float]:
    """Directed Hausdorff components (d1, d2).

    d1 = max over estimated points of the distance to the nearest true point,
    d2 = max over true points of the distance to the nearest estimated point.
    With no estimated change-point both are NaN.
    """
    a = np.asarray(truth, float)
    b = np.asarray(est, float)
    if a.size == 0:
        raise ValueError("truth must contain at least one change-point")
    if b.size == 0:
        return math.nan, math.nan
    dist = np.abs(a[:, None] - b[None, :])
    return float(dist.min(axis=0).max()), float(dist.min(axis=1).max())


def rmse(truth, est) -> float:
    truth = np.asarray(truth, float)
    est = np.asarray(est, float)
    if truth.shape != est.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((est - truth) ** 2)))


rmse_mu = rmse
rmse_f = rmse


@dataclass
class QualityReport:
    criterion: str
    K_hat: int
    K_diff: int
    rmse_mu: float
    rmse_f: float
    d1: float
    d2: float
    changepoints: list


def score(truth: Truth, fit, criterion: str, phase) -> QualityReport:
    seg = fit.segmentation
    f_hat = fit.fourier.evaluate(phase)
    d1, d2 = hausdorff(truth.changepoints, seg.changepoints)
    return QualityReport(
        criterion, seg.K, seg.K - (truth.changepoints.size + 1),
        rmse(truth.mu, seg.fitted()), rmse(truth.f, f_hat), d1, d2, seg.changepoints.tolist(),
    )


def replicate_seed(seed: int, sigma1: float, sigma2: float, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(int(round(sigma1 * 1000)), int(round(sigma2 * 1000)), rep))


def study_options(config: SimConfig, opts: InferenceOptions | None) -> InferenceOptions:
    opts = InferenceOptions() if opts is None else opts
    return replace(opts, period=config.period, threads=1)


def run_replicate(config: SimConfig, rep: int, criteria=CRITERIA, opts: InferenceOptions | None = None, true_k: bool = True) -> dict:
    """Generate, estimate and score one replicate; returns a JSON-ready record."""
    opts = study_options(config, opts)
    series, truth = generate(config, replicate_seed(config.seed, config.sigma1, config.sigma2, rep))
    result = infer_all_k(series, opts)
    sel = select_from_inference(result, criteria)
    phase = series.day_phase()
    reports = [asdict(score(truth, result[K], c, phase)) for c, K in sel.as_dict().items()]
    if true_k:
        reports.append(asdict(score(truth, result[config.K], TRUE_K, phase)))
    present = result.sigma.present
    sigma_err = {f"sigma{m}_error": float(result.sigma.sigma[m - 1] - truth.month_sigma[m - 1])
                 for m in range(1, config.months_per_year + 1) if present[m - 1]}
    return {
        "sigma1": config.sigma1, "sigma2": config.sigma2, "replicate": rep,
        **sigma_err, "ssr": result.ssr.tolist(),
        "converged": [r.converged for r in result.fits],
        "reports": reports,
    }


@dataclass
class StudyReport:
    config: SimConfig
    records: list = field(default_factory=list)

    def reports(self, criterion: str, sigma1=None, sigma2=None) -> list[dict]:
        out = []
        for rec in self.records:
            if sigma1 is not None and not math.isclose(rec["sigma1"], sigma1):
                continue
            if sigma2 is not None and not math.isclose(rec["sigma2"], sigma2):
                continue
            out.extend(r for r in rec["reports"] if r["criterion"] == criterion)
        return out

    def metric(self, criterion: str, name: str, sigma1=None, sigma2=None) -> np.ndarray:
        return np.array([r[name] for r in self.reports(criterion, sigma1, sigma2)], float)

    def detection_rate(self, criterion: str, position: int, sigma1=None, sigma2=None, window: int = 0) -> float:
        reps = self.reports(criterion, sigma1, sigma2)
        if not reps:
            return math.nan
        hits = sum(any(abs(c - position) <= window for c in r["changepoints"]) for r in reps)
        return hits / len(reps)


def run_study(
    config: SimConfig,
    criteria: Sequence[str] = CRITERIA,
    opts: InferenceOptions | None = None,
    sigma1_values: Sequence[float] | None = None,
    sigma2_values: Sequence[float] | None = None,
    threads: int | None = None,
) -> StudyReport:
    """Replicate batches over the (sigma1, sigma2) grid, plus the true-K condition.

    Replicates run in parallel; records are ordered by (sigma1, sigma2, replicate).
    """
    criteria = [normalize_criterion(c) for c in criteria]
    s1 = [config.sigma1] if sigma1_values is None else list(sigma1_values)
    s2 = [config.sigma2] if sigma2_values is None else list(sigma2_values)
    jobs = [(replace(config, sigma1=a, sigma2=b), rep) for a in s1 for b in s2 for rep in range(config.replicates)]
    nthreads = thread_count(threads)

    def work(job):
        cfg, rep = job
        return run_replicate(cfg, rep, criteria, opts)

    if nthreads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            records = list(pool.map(work, jobs))
    else:
        records = [work(j) for j in jobs]
    log.info("study finished: %d replicates", len(records))
    return StudyReport(config, records)


def _quantile_rows(values, s1, s2, crit, metric):
    v = np.asarray(values, float)
    v = v[np.isfinite(v)]
    rows = []
    for q in QUANTILES:
        rows.append((s1, s2, crit, metric, f"{q:g}", float(np.quantile(v, q)) if v.size else math.nan))
    rows.append((s1, s2, crit, metric, "mean", float(v.mean()) if v.size else math.nan))
    return rows


HEADER = ("sigma1", "sigma2", "criterion", "metric", "quantile", "value")


def study_tables(report: StudyReport) -> dict[str, list[tuple]]:
    """Plot-ready tables keyed by output file name."""
    cells = sorted({(r["sigma1"], r["sigma2"]) for r in report.records})
    crits = []
    for rec in report.records:
        for r in rec["reports"]:
            if r["criterion"] not in crits:
                crits.append(r["criterion"])
    tables = {"fig3_sigma_errors.csv": [], "fig4_quality.csv": [], "fig5_detections.csv": [], "fig6_rmse_f.csv": []}
    n = report.config.n
    for s1, s2 in cells:
        recs = [r for r in report.records if r["sigma1"] == s1 and r["sigma2"] == s2]
        for m in range(1, report.config.months_per_year + 1):
            key = f"sigma{m}_error"
            tables["fig3_sigma_errors.csv"] += _quantile_rows([r.get(key, math.nan) for r in recs], s1, s2, "-", key)
        for c in crits:
            for metric in ("K_diff", "rmse_mu", "d1", "d2"):
                tables["fig4_quality.csv"] += _quantile_rows(report.metric(c, metric, s1, s2), s1, s2, c, metric)
            tables["fig6_rmse_f.csv"] += _quantile_rows(report.metric(c, "rmse_f", s1, s2), s1, s2, c, "rmse_f")
            reps = report.reports(c, s1, s2)
            counts = np.zeros(n, int)
            for r in reps:
                counts[np.asarray(r["changepoints"], int)] += 1
            for pos in range(1, n):
                tables["fig5_detections.csv"].append((s1, s2, c, f"detection_rate_t{pos}", "mean", counts[pos] / max(len(reps), 1)))
    return tables


def write_study(report: StudyReport, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in study_tables(report).items():
        p = out / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HEADER)
            w.writerows(rows)
        paths.append(p)
    p = out / "replicates.jsonl"
    with open(p, "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    paths.append(p)
    return paths
