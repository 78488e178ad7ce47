"""Robust estimation of the monthly noise standard deviations.

The scale of each month is estimated with the Qn estimator of Rousseeuw and
Croux applied to lag-1 differences, which treats mean shifts as outliers.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import DataError, MonthIndex, MonthlyStd, TimeSeries, month_index

# 1 / (sqrt(2) * Phi^-1(5/8))
QN_CONSTANT = 1.0 / (math.sqrt(2.0) * 0.31863936396437514)

# small-sample correction factors, Croux & Rousseeuw (1992)
_QN_SMALL = {2: 0.399, 3: 0.994, 4: 0.512, 5: 0.844, 6: 0.611, 7: 0.857, 8: 0.669, 9: 0.872}


class DegenerateScaleError(DataError):
    """A scale estimate is zero, so the derived weights would be infinite."""


def qn_correction(n: int) -> float:
    if n in _QN_SMALL:
        return _QN_SMALL[n]
    if n % 2:
        return n / (n + 1.4)
    return n / (n + 3.8)


@njit(cache=True)
def _weighted_median(values, weights):
    order = np.argsort(values, kind="mergesort")
    half = weights.sum() / 2.0
    acc = 0.0
    for idx in order:
        acc += weights[idx]
        if acc >= half:
            return values[idx]
    return values[order[-1]]


@njit(cache=True)
def _kth_pairwise_gap(y, k):
    # k-th smallest (1-based) of y[j] - y[i], i < j, for sorted y.
    # Rows i hold y[i+1..n-1] - y[i], each sorted; [lo[i], hi[i]] is the
    # column range of row i still containing candidates.
    n = y.size
    lo = np.arange(1, n + 1)
    hi = np.full(n, n - 1)
    below = np.zeros(n, np.int64)
    upto = np.zeros(n, np.int64)
    vals = np.empty(n)
    wts = np.empty(n)
    while True:
        remaining = 0
        n_left = 0
        for i in range(n):
            if hi[i] >= lo[i]:
                remaining += hi[i] - lo[i] + 1
            n_left += lo[i] - (i + 1)
        if remaining <= n:
            break
        m = 0
        for i in range(n):
            if hi[i] >= lo[i]:
                mid = (lo[i] + hi[i]) // 2
                vals[m] = y[mid] - y[i]
                wts[m] = hi[i] - lo[i] + 1
                m += 1
        trial = _weighted_median(vals[:m], wts[:m])
        jp = 1
        jq = 1
        sum_p = 0
        sum_q = 0
        for i in range(n):
            if jp < i + 1:
                jp = i + 1
            while jp < n and y[jp] - y[i] < trial:
                jp += 1
            if jq < i + 1:
                jq = i + 1
            while jq < n and y[jq] - y[i] <= trial:
                jq += 1
            below[i] = jp - (i + 1)
            upto[i] = jq - (i + 1)
            sum_p += below[i]
            sum_q += upto[i]
        if k <= sum_p:
            for i in range(n):
                hi[i] = min(hi[i], i + below[i])
        elif k > sum_q:
            for i in range(n):
                lo[i] = max(lo[i], i + upto[i] + 1)
        else:
            return trial
    cand = np.empty(remaining)
    m = 0
    for i in range(n):
        for j in range(lo[i], hi[i] + 1):
            cand[m] = y[j] - y[i]
            m += 1
    cand.sort()
    return cand[k - n_left - 1]


def qn_order_statistic(sample) -> float:
    """The k-th smallest pairwise absolute difference, k = C(floor(n/2)+1, 2)."""
    x = np.sort(np.asarray(sample, float).ravel())
    n = x.size
    if n < 2:
        raise ValueError("Qn needs at least 2 observations")
    h = n // 2 + 1
    k = h * (h - 1) // 2
    return float(_kth_pairwise_gap(x, k))


def qn_scale(sample) -> float:
    """Qn scale estimate, consistent for the standard deviation at the normal.

    Examples
    --------
    >>> round(qn_scale([1, 2, 3, 4, 5]), 6)
    1.872958
    """
    x = np.asarray(sample, float).ravel()
    if x.size < 2:
        raise ValueError("Qn needs at least 2 observations")
    return QN_CONSTANT * qn_correction(x.size) * qn_order_statistic(x)


def diff_sample(series: TimeSeries, months: MonthIndex | None = None) -> dict[int, np.ndarray]:
    """Lag-1 differences grouped by month.

    Only pairs of observations on consecutive days within the same month are
    kept; differences across gaps or month boundaries are discarded.
    """
    months = month_index(series) if months is None else months
    y = series.values
    days = series.day_numbers()
    labels = months.labels
    keep = (np.diff(days) == 1) & (labels[1:] == labels[:-1])
    d = np.diff(y)[keep]
    lab = labels[1:][keep]
    return {m: d[lab == m] for m in range(1, 13) if months.counts[m - 1] > 0}


def monthly_std(series: TimeSeries, months: MonthIndex | None = None) -> MonthlyStd:
    months = month_index(series) if months is None else months
    sigma = np.full(12, np.nan)
    for m, d in diff_sample(series, months).items():
        if d.size < 2:
            raise DataError(f"month {m}: fewer than 2 adjacent-day differences ({d.size})")
        sigma[m - 1] = qn_scale(d) / math.sqrt(2.0)
        if sigma[m - 1] <= 0:
            raise DegenerateScaleError(f"month {m}: zero scale estimate")
    return MonthlyStd(sigma, "robust-estimated")


def homogeneous_std(series: TimeSeries) -> MonthlyStd:
    """Single Qn-based scale over all adjacent-day differences, for all 12 months."""
    d = np.diff(series.values)[np.diff(series.day_numbers()) == 1]
    if d.size < 2:
        raise DataError(f"fewer than 2 adjacent-day differences ({d.size})")
    s = qn_scale(d) / math.sqrt(2.0)
    if s <= 0:
        raise DegenerateScaleError("zero scale estimate")
    return MonthlyStd(np.full(12, s), "homogeneous")
