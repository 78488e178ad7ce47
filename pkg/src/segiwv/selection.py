"""Choice of the number of segments from the SSR_K curve.

Four criteria: the modified BIC (mBIC), Lavielle's adaptive penalty (Lav) and
the Birge-Massart penalty calibrated by the slope heuristic, either with the
dimension jump (BM1) or with a data-driven slope estimate (BM2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

CRITERIA = ("mBIC", "Lav", "BM1", "BM2")
LAVIELLE_THRESHOLD = 0.75
# SSR values below this fraction of SSR_1 are treated as exact zeros
ZERO_SSR = 1e-10


@dataclass(frozen=True)
class CriterionChoice:
    K: int
    penalty_constant: float = math.nan
    values: list = field(default_factory=list)


@dataclass(frozen=True)
class SelectionResult:
    choices: dict

    def __getitem__(self, criterion: str) -> int:
        return self.choices[normalize_criterion(criterion)].K

    def as_dict(self) -> dict:
        return {c: ch.K for c, ch in self.choices.items()}


def normalize_criterion(name: str) -> str:
    lookup = {c.lower(): c for c in CRITERIA}
    try:
        return lookup[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown criterion {name!r}; expected one of {CRITERIA}") from None


def _clean(ssr) -> np.ndarray:
    ssr = np.asarray(ssr, float)
    if ssr.ndim != 1 or ssr.size == 0:
        raise ValueError("SSR curve must be a non-empty 1-d array")
    scale = ssr[0] if ssr[0] > 0 else ssr.max()
    return np.where(ssr <= ZERO_SSR * scale, 0.0, ssr)


def pen_shape(K, n: int) -> np.ndarray:
    K = np.asarray(K, float)
    return K * (5.0 + 2.0 * np.log(n / K))


def mbic_values(ssr, segment_lengths: Sequence[Sequence[int]], n: int) -> np.ndarray:
    ssr = _clean(ssr)
    out = np.empty(ssr.size)
    for idx, lengths in enumerate(segment_lengths):
        K = idx + 1
        if len(lengths) != K:
            raise ValueError(f"segmentation {K} has {len(lengths)} segments")
        out[idx] = -0.5 * ssr[idx] - 0.5 * np.sum(np.log(lengths)) + (0.5 - K) * math.log(n)
    return out


def select_mbic(ssr, segment_lengths: Sequence[Sequence[int]], n: int) -> CriterionChoice:
    """argmax_K -SSR_K/2 - sum_k log(n_k)/2 + (1/2 - K) log n, each K with its own segment lengths."""
    vals = mbic_values(ssr, segment_lengths, n)
    return CriterionChoice(int(np.argmax(vals)) + 1, math.nan, vals.tolist())


def lavielle_second_differences(ssr) -> np.ndarray:
    """D_K for K = 2..K_max-1 after rescaling SSR so J_1 = K_max and J_{K_max} = 1."""
    ssr = _clean(ssr)
    kmax = ssr.size
    span = ssr[0] - ssr[-1]
    if kmax < 3 or span <= 0:
        return np.zeros(max(kmax - 2, 0))
    J = (ssr[-1] - ssr) / (ssr[-1] - ssr[0]) * (kmax - 1) + 1
    return J[:-2] - 2 * J[1:-1] + J[2:]


def select_lavielle(ssr, S: float = LAVIELLE_THRESHOLD) -> CriterionChoice:
    """Largest K with D_K > S, or K = 1 when no second difference exceeds S."""
    D = lavielle_second_differences(ssr)
    above = np.nonzero(D > S)[0]
    K = int(above[-1]) + 2 if above.size else 1
    return CriterionChoice(K, S, D.tolist())


def _argmin_penalized(ssr, pen, alpha) -> int:
    crit = ssr + alpha * pen
    return int(np.flatnonzero(crit == crit.min())[0]) + 1


def dimension_path(ssr, n: int) -> list[tuple[float, int, int]]:
    """Breakpoints of K(alpha) = argmin SSR_K + alpha pen_shape(K) for alpha >= 0.

    Returns ``(alpha, K_before, K_after)`` triples, alpha increasing. At
    alpha = 0 the path starts from the largest minimiser of SSR; past each
    breakpoint ties go to the smaller model.
    """
    ssr = _clean(ssr)
    pen = pen_shape(np.arange(1, ssr.size + 1), n)
    cur = int(np.flatnonzero(ssr == ssr.min())[-1]) + 1
    path = []
    zero_k = _argmin_penalized(ssr, pen, 0.0)
    if zero_k != cur:
        path.append((0.0, cur, zero_k))
        cur = zero_k
    alpha = 0.0
    while cur > 1:
        idx = np.arange(cur - 1)
        a = (ssr[idx] - ssr[cur - 1]) / (pen[cur - 1] - pen[idx])
        nxt = float(a.min())
        nxt_k = int(np.flatnonzero(a == nxt)[0]) + 1
        alpha = max(alpha, nxt)
        path.append((alpha, cur, nxt_k))
        cur = nxt_k
    return path


def select_bm1(ssr, n: int) -> CriterionChoice:
    """Dimension jump: alpha* at the largest drop of K(alpha), K = K(2 alpha*)."""
    ssr_c = _clean(ssr)
    path = dimension_path(ssr_c, n)
    pen = pen_shape(np.arange(1, ssr_c.size + 1), n)
    if not path:
        return CriterionChoice(1, 0.0, [])
    # largest jump; ties go to the larger alpha
    best = max(range(len(path)), key=lambda i: (path[i][1] - path[i][2], path[i][0]))
    alpha = path[best][0]
    K = _argmin_penalized(ssr_c, pen, 2 * alpha)
    return CriterionChoice(K, alpha, [list(p) for p in path])


def lad_line(x, y) -> tuple[float, float]:
    """Least-absolute-deviation line through the data (exact, by pair enumeration)."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    best = (math.inf, 0.0, float(np.median(y)))
    for i, j in combinations(range(x.size), 2):
        if x[i] == x[j]:
            continue
        slope = (y[j] - y[i]) / (x[j] - x[i])
        icpt = y[i] - slope * x[i]
        loss = float(np.abs(y - icpt - slope * x).sum())
        if loss < best[0]:
            best = (loss, slope, icpt)
    return best[1], best[2]


def select_bm2(ssr, n: int) -> CriterionChoice:
    """Slope heuristic with the slope fitted robustly on the upper half of K values."""
    ssr_c = _clean(ssr)
    kmax = ssr_c.size
    Ks = np.arange(1, kmax + 1)
    pen = pen_shape(Ks, n)
    lo = math.ceil(kmax / 2)
    sel = Ks >= lo
    if sel.sum() < 2:
        return CriterionChoice(_argmin_penalized(ssr_c, pen, 0.0), 0.0, [])
    slope, _ = lad_line(pen[sel], ssr_c[sel])
    alpha = max(-slope, 0.0)
    K = _argmin_penalized(ssr_c, pen, 2 * alpha)
    return CriterionChoice(K, alpha, (ssr_c + 2 * alpha * pen).tolist())


def select_bm(ssr, n: int, calibration: str = "dimension-jump") -> CriterionChoice:
    if calibration in ("dimension-jump", "BM1"):
        return select_bm1(ssr, n)
    if calibration in ("data-driven-slope", "BM2"):
        return select_bm2(ssr, n)
    raise ValueError(f"unknown calibration {calibration!r}")


def select_all(ssr, segment_lengths, n: int, criteria: Sequence[str] = CRITERIA) -> SelectionResult:
    choices = {}
    for c in map(normalize_criterion, criteria):
        if c == "mBIC":
            choices[c] = select_mbic(ssr, segment_lengths, n)
        elif c == "Lav":
            choices[c] = select_lavielle(ssr)
        elif c == "BM1":
            choices[c] = select_bm1(ssr, n)
        else:
            choices[c] = select_bm2(ssr, n)
    return SelectionResult(choices)


def select_from_inference(result, criteria: Sequence[str] = CRITERIA) -> SelectionResult:
    lengths = [r.segmentation.segment_lengths for r in result.fits]
    return select_all(result.ssr, lengths, result.series.n, criteria)
