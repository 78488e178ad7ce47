"""Exact weighted least-squares segmentation by dynamic programming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Segmentation, segmentation_from_changepoints


def weighted_mean(z, w) -> float:
    z = np.asarray(z, float)
    w = np.asarray(w, float)
    if z.size == 0:
        raise ValueError("empty segment")
    return float(np.dot(w, z) / w.sum())


class CostMatrix:
    """Segment costs C(i, j) = min_mu sum_{t=i}^{j-1} w_t (z_t - mu)^2 from prefix sums.

    Indices are 0-based and half-open: ``cost(i, j)`` covers ``z[i:j]``.
    Prefix sums are accumulated in extended precision on the centred signal.
    """

    def __init__(self, z, w):
        z = np.asarray(z, float)
        w = np.asarray(w, float)
        if z.shape != w.shape or z.ndim != 1:
            raise ValueError("z and w must be 1-d and of equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be positive and finite")
        zc = z - np.dot(w, z) / w.sum()
        ld = np.longdouble
        zero = np.zeros(1, ld)
        self.W = np.concatenate((zero, np.cumsum(w.astype(ld)))).astype(float)
        self.S = np.concatenate((zero, np.cumsum(w.astype(ld) * zc))).astype(float)
        self.Q = np.concatenate((zero, np.cumsum(w.astype(ld) * zc * zc))).astype(float)
        self.n = z.size

    def cost(self, i: int, j: int) -> float:
        if j <= i:
            return 0.0
        sw = self.W[j] - self.W[i]
        s = self.S[j] - self.S[i]
        return max(self.Q[j] - self.Q[i] - s * s / sw, 0.0)


@njit(cache=True, nogil=True, error_model="numpy")
def _relax_row(Wv, Sv, Qv, base, wi, si, qi, cur, arg, i):
    # zero-based loops over slices so LLVM can vectorize (no wraparound checks)
    for j in range(Wv.size):
        s = Sv[j] - si
        c = base + max(Qv[j] - qi - s * s / (Wv[j] - wi), 0.0)
        better = c < cur[j]
        cur[j] = c if better else cur[j]
        arg[j] = i if better else arg[j]


@njit(cache=True, nogil=True, error_model="numpy")
def _dp_tables(W, S, Q, kmax, min_len, last_only):
    n = W.size - 1
    F = np.full((kmax, n + 1), np.inf)
    A = np.zeros((kmax, n + 1), np.int64)
    # entry (k, j): best cost of z[:j] in k+1 segments; A holds the last start
    for j in range(min_len, n + 1):
        s = S[j] - S[0]
        F[0, j] = max(Q[j] - Q[0] - s * s / (W[j] - W[0]), 0.0)
    cur = np.empty(n + 1)
    arg = np.empty(n + 1, np.int64)
    for k in range(1, kmax):
        prev = F[k - 1]
        cur[:] = np.inf
        arg[:] = 0
        # i ascending with a strict comparison keeps the smallest argmin
        # with last_only the final layer is needed at j = n alone
        jmax = n if (k == kmax - 1 or not last_only) else n - min_len * (kmax - 1 - k)
        for i in range(k * min_len, jmax - min_len + 1):
            base = prev[i]
            if base == np.inf:
                continue
            if last_only and k == kmax - 1:
                j0 = n
            else:
                j0 = i + min_len
            _relax_row(W[j0:jmax + 1], S[j0:jmax + 1], Q[j0:jmax + 1], base, W[i], S[i], Q[i], cur[j0:jmax + 1], arg[j0:jmax + 1], i)
        F[k] = cur
        A[k] = arg
    return F, A


def _backtrack(A: np.ndarray, K: int, n: int) -> np.ndarray:
    cps = []
    end = n
    for k in range(K - 1, 0, -1):
        end = int(A[k, end])
        cps.append(end)
    return np.array(cps[::-1], dtype=int)


@dataclass(frozen=True, eq=False)
class DPResult:
    """Optimal segmentations for K = 1..K_max; ``ssr[K-1]`` is SSR_K."""

    ssr: np.ndarray
    segmentations: list[Segmentation]

    @property
    def K_max(self) -> int:
        return len(self.segmentations)

    def __getitem__(self, K: int) -> Segmentation:
        return self.segmentations[K - 1]


def _check_inputs(z, weights, K_max, min_len):
    z = np.asarray(z, float)
    w = np.asarray(weights, float)
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if K_max * min_len > z.size:
        raise ValueError(f"K_max={K_max} segments of length >= {min_len} do not fit in n={z.size}")
    return z, w


def dp_segment(z, weights, K_max: int, min_len: int = 1) -> DPResult:
    """Globally optimal K-segment fits of ``z`` for every K <= K_max.

    Runs the classical O(K_max n^2) recursion. Among equal-cost solutions the
    one with the smallest last change-point is kept, recursively.
    """
    z, w = _check_inputs(z, weights, K_max, min_len)
    cm = CostMatrix(z, w)
    _, A = _dp_tables(cm.W, cm.S, cm.Q, K_max, min_len, False)
    segs = [segmentation_from_changepoints(_backtrack(A, K, z.size), z, w) for K in range(1, K_max + 1)]
    ssr = np.array([ssr_of(s, z, w) for s in segs])
    return DPResult(ssr, segs)


def dp_fixed_k(z, weights, K: int, min_len: int = 1) -> Segmentation:
    """Optimal segmentation with exactly K segments (same recursion as dp_segment)."""
    z, w = _check_inputs(z, weights, K, min_len)
    cm = CostMatrix(z, w)
    _, A = _dp_tables(cm.W, cm.S, cm.Q, K, min_len, True)
    return segmentation_from_changepoints(_backtrack(A, K, z.size), z, w)


def ssr_of(segmentation: Segmentation, z, weights) -> float:
    """Weighted SSR of ``z`` around the weighted mean of each segment."""
    z = np.asarray(z, float)
    w = np.asarray(weights, float)
    total = 0.0
    bounds = segmentation.bounds
    for a, b in zip(bounds[:-1], bounds[1:]):
        zs = z[a:b]
        ws = w[a:b]
        mu = np.dot(ws, zs) / ws.sum()
        total += float(np.dot(ws, (zs - mu) ** 2))
    return total
