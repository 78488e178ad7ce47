"""Weighted least-squares fitting of the periodic bias as a Fourier series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .core import FourierModel, harmonic_columns


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HarmonicDesign:
    """Columns cos(w_i t), sin(w_i t), i = 1..order, one row per observation."""

    X: np.ndarray
    order: int
    period: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


def harmonic_design(phase, order: int, period: float) -> HarmonicDesign:
    return HarmonicDesign(harmonic_columns(phase, order, period), order, float(period))


@dataclass(frozen=True, eq=False)
class FitDiagnostics:
    """Per-coefficient statistics in (order, 2) layout; NaN for inactive terms."""

    estimate: np.ndarray
    std_error: np.ndarray
    t_stat: np.ndarray
    p_value: np.ndarray
    weighted_rss: float


class WeightedHarmonicSolver:
    """QR factorisation of the weighted design, reusable across right-hand sides.

    With ``intercept=True`` a constant column is prepended and its coefficient
    discarded from the returned model.
    """

    def __init__(self, design: HarmonicDesign, weights=None, active=None, intercept: bool = False):
        self.design = design
        n = design.n
        w = np.ones(n) if weights is None else np.asarray(weights, float)
        if w.shape != (n,) or np.any(w <= 0):
            raise ValueError("weights must be positive, one per observation")
        active = np.ones((design.order, 2), bool) if active is None else np.asarray(active, bool)
        self.active = active.reshape(design.order, 2)
        cols = design.X[:, self.active.ravel()]
        if intercept:
            cols = np.column_stack((np.ones(n), cols))
        self.intercept = intercept
        self.sqrt_w = np.sqrt(w)
        self.weights = w
        p = cols.shape[1]
        if p == 0:
            self.q = np.zeros((n, 0))
            self.r = np.zeros((0, 0))
            return
        if n < p:
            raise RankDeficientError(f"{p} coefficients but only {n} observations")
        self.q, self.r = linalg.qr(self.sqrt_w[:, None] * cols, mode="economic")
        d = np.abs(np.diag(self.r))
        if d.min() <= 1e-10 * d.max():
            raise RankDeficientError("harmonic design is rank deficient")

    def _solve(self, y) -> np.ndarray:
        if self.r.size == 0:
            return np.zeros(0)
        return linalg.solve_triangular(self.r, self.q.T @ (self.sqrt_w * y))

    def coefficients(self, y) -> np.ndarray:
        """Full (order, 2) coefficient array, zeros for inactive terms."""
        beta = self._solve(np.asarray(y, float))
        if self.intercept:
            beta = beta[1:]
        coeffs = np.zeros((self.design.order, 2))
        coeffs[self.active] = beta
        return coeffs

    def model(self, y) -> FourierModel:
        return FourierModel(self.design.order, self.design.period, self.coefficients(y), self.active)

    def diagnostics(self, y, coeffs: np.ndarray) -> FitDiagnostics:
        y = np.asarray(y, float)
        X = self.design.X
        resid = y - X @ coeffs.ravel()
        if self.intercept:
            resid = resid - np.dot(self.weights, resid) / self.weights.sum()
        est = np.full((self.design.order, 2), np.nan)
        se = np.full_like(est, np.nan)
        if self.r.size:
            # variance known (weights are 1/sigma^2): cov = (X'WX)^-1
            rinv = linalg.solve_triangular(self.r, np.eye(self.r.shape[0]))
            s = np.sqrt(np.sum(rinv**2, axis=1))
            if self.intercept:
                s = s[1:]
            se[self.active] = s
            est[self.active] = coeffs[self.active]
        t = est / se
        p = 2.0 * norm.sf(np.abs(t))
        return FitDiagnostics(est, se, t, p, float(np.dot(self.weights, resid**2)))


def fit_weighted(residual, weights, design: HarmonicDesign, active=None) -> tuple[FourierModel, FitDiagnostics]:
    """Fit f minimising sum w_t (residual_t - f_t)^2 (no constant term)."""
    solver = WeightedHarmonicSolver(design, weights, active)
    model = solver.model(residual)
    return model, solver.diagnostics(residual, model.coeffs)


def fit_unweighted(signal, design: HarmonicDesign, active=None) -> FourierModel:
    """Ordinary least squares on the raw signal with a discarded intercept."""
    return WeightedHarmonicSolver(design, None, active, intercept=True).model(signal)


def select_significant(
    model: FourierModel,
    diag: FitDiagnostics,
    alpha: float = 0.001,
    *,
    residual=None,
    weights=None,
    design: HarmonicDesign | None = None,
) -> FourierModel:
    """Keep only terms with p-value < alpha.

    If ``residual``, ``weights`` and ``design`` are given the surviving terms
    are refitted jointly; otherwise the dropped terms are just zeroed.
    """
    keep = model.active & (diag.p_value < alpha)
    if alpha >= 1.0:
        keep = model.active.copy()
    if residual is not None and design is not None:
        return WeightedHarmonicSolver(design, weights, keep).model(residual)
    return FourierModel(model.order, model.period, np.where(keep, model.coeffs, 0.0), keep)
