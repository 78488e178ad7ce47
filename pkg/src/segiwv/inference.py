"""Alternating estimation of the periodic bias and the segmentation.

For each number of segments K the monthly standard deviations are fixed first
(robust estimate), then the Fourier bias and the piecewise-constant mean are
updated in turn: a weighted least-squares fit of f on y - mu, followed by an
exact DP segmentation of y - f with weights 1/sigma^2.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FourierModel, MonthIndex, MonthlyStd, Segmentation, TimeSeries, YEAR_LENGTH, month_index
from .dp import dp_fixed_k, ssr_of
from .fourier import WeightedHarmonicSolver, harmonic_design, select_significant
from .robust import homogeneous_std, monthly_std

log = logging.getLogger(__name__)

VARIANTS = ("a", "b", "c", "d")
INITS = ("default", "seg-first", "weighted", "weighted-centered")


@dataclass(frozen=True)
class InferenceOptions:
    """Settings of the estimation procedure.

    variant: ``a`` full model, ``b`` full model with selection of significant
    Fourier terms, ``c`` segmentation only (no bias), ``d`` homogeneous variance.
    init: ``default`` (unweighted f first), ``seg-first``, ``weighted``
    (weighted f first) or ``weighted-centered`` (weighted f on y - mean(y)).
    known_shape: model f as a_1 cos(2 pi t / L) only.
    """

    K_max: int = 30
    variant: str = "a"
    init: str = "default"
    stop_tol: float = 1e-6
    max_iters: int = 100
    accelerate: bool = False
    fourier_order: int = 4
    period: float = YEAR_LENGTH
    selection_alpha: float = 0.001
    refit_selected: bool = True
    update_variance: bool = False
    known_shape: bool = False
    min_len: int = 1
    threads: int | None = None

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}")
        if self.fourier_order < 0:
            raise ValueError("fourier_order must be >= 0")
        if self.min_len < 1:
            raise ValueError("min_len must be >= 1")


@dataclass(frozen=True, eq=False)
class FixedKResult:
    K: int
    segmentation: Segmentation
    fourier: FourierModel
    ssr: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    sigma: MonthlyStd | None = None

    def fitted_bias(self, phase) -> np.ndarray:
        return self.fourier.evaluate(phase)


@dataclass(frozen=True, eq=False)
class InferenceResult:
    series: TimeSeries
    sigma: MonthlyStd
    options: InferenceOptions
    fits: list

    @property
    def ssr(self) -> np.ndarray:
        return np.array([r.ssr for r in self.fits])

    @property
    def K_max(self) -> int:
        return len(self.fits)

    def __getitem__(self, K: int) -> FixedKResult:
        return self.fits[K - 1]


class _Problem:
    """Quantities shared by every K: data, weights, design and factorisations."""

    def __init__(self, series: TimeSeries, sigma: MonthlyStd, opts: InferenceOptions, months: MonthIndex | None = None):
        self.series = series
        self.opts = opts
        self.months = month_index(series) if months is None else months
        self.y = series.values
        self.phase = series.day_phase()
        order = 0 if opts.variant == "c" else (1 if opts.known_shape else opts.fourier_order)
        self.design = harmonic_design(self.phase, order, opts.period) if order else None
        self.active = None
        if order and opts.known_shape:
            self.active = np.array([[True, False]])
        self.set_sigma(sigma)

    def set_sigma(self, sigma: MonthlyStd):
        self.sigma = sigma
        self.w = self.months.weights(sigma)
        # built eagerly so threads share a read-only factorisation
        self.wsolver = None if self.design is None else WeightedHarmonicSolver(self.design, self.w, self.active)

    def zero_model(self) -> FourierModel:
        if self.design is None:
            return FourierModel.zero(self.opts.period)
        return FourierModel(self.design.order, self.opts.period, None, self.active)

    def fit_f(self, target) -> FourierModel:
        if self.design is None:
            return self.zero_model()
        model = self.wsolver.model(target)
        if self.opts.variant == "b":
            diag = self.wsolver.diagnostics(target, model.coeffs)
            if self.opts.refit_selected:
                model = select_significant(model, diag, self.opts.selection_alpha, residual=target, weights=self.w, design=self.design)
            else:
                model = select_significant(model, diag, self.opts.selection_alpha)
        return model

    def initial_f(self) -> FourierModel:
        init = self.opts.init
        if self.design is None or init == "seg-first":
            return self.zero_model()
        if init == "default":
            return WeightedHarmonicSolver(self.design, None, self.active, intercept=True).model(self.y)
        if init == "weighted":
            return self.fit_f(self.y)
        return self.fit_f(self.y - np.dot(self.w, self.y) / self.w.sum())

    def curve(self, model: FourierModel) -> np.ndarray:
        if self.design is None or model.order == 0:
            return np.zeros(self.y.size)
        return self.design.X @ model.coeffs.ravel()

    def segment(self, f_curve, K: int) -> Segmentation:
        return dp_fixed_k(self.y - f_curve, self.w, K, self.opts.min_len)

    def objective(self, f_curve, seg: Segmentation) -> float:
        return ssr_of(seg, self.y - f_curve, self.w)

    def update_sigma(self, f_curve, seg: Segmentation):
        resid = self.y - f_curve - seg.fitted()
        sigma = np.full(12, np.nan)
        for m in range(1, 13):
            sel = self.months.labels == m
            if sel.any():
                sigma[m - 1] = max(np.sqrt(np.mean(resid[sel] ** 2)), 1e-12)
        self.set_sigma(MonthlyStd(sigma, "updated"))


def _rel_change(new, old) -> float:
    return float(np.max(np.abs(new - old)) / (1.0 + np.max(np.abs(old))))


def infer_fixed_k(series: TimeSeries, sigma: MonthlyStd, K: int, opts: InferenceOptions | None = None, *, _problem: _Problem | None = None) -> FixedKResult:
    """Estimate (f, t, mu) for a fixed number of segments K.

    Non-convergence within ``max_iters`` is not an error: the best iterate is
    returned with ``converged=False``.
    """
    opts = InferenceOptions() if opts is None else opts
    if K < 1 or K > series.n:
        raise ValueError(f"K={K} outside 1..n={series.n}")
    prob = _Problem(series, sigma, opts) if _problem is None else _problem
    if opts.update_variance:
        prob = _Problem(series, sigma, opts, prob.months)

    if prob.design is None:
        zero = np.zeros(series.n)
        seg = prob.segment(zero, K)
        ssr = prob.objective(zero, seg)
        return FixedKResult(K, seg, prob.zero_model(), ssr, 1, True, [ssr], prob.sigma)

    if K == 1 and opts.variant != "b" and not opts.update_variance:
        # one segment: the joint weighted fit of constant and harmonics is exact
        model = WeightedHarmonicSolver(prob.design, prob.w, prob.active, intercept=True).model(prob.y)
        f = prob.curve(model)
        seg = prob.segment(f, 1)
        ssr = prob.objective(f, seg)
        return FixedKResult(1, seg, model, ssr, 1, True, [ssr], prob.sigma)

    model = prob.initial_f()
    f = prob.curve(model)
    seg = prob.segment(f, K)
    obj = prob.objective(f, seg)
    trace = [obj]
    best = (obj, model, seg)
    if opts.accelerate:
        return _squarem(prob, K, model, seg, trace)

    converged = False
    it = 0
    g_old = f + seg.fitted()
    while it < opts.max_iters:
        it += 1
        model = prob.fit_f(prob.y - seg.fitted())
        f = prob.curve(model)
        seg = prob.segment(f, K)
        if opts.update_variance:
            prob.update_sigma(f, seg)
        obj = prob.objective(f, seg)
        trace.append(obj)
        if obj <= best[0]:
            best = (obj, model, seg)
        g = f + seg.fitted()
        if _rel_change(g, g_old) < opts.stop_tol:
            converged = True
            break
        g_old = g
    if not converged:
        obj, model, seg = best
    return FixedKResult(K, seg, model, obj, it, converged, trace, prob.sigma)


def _squarem(prob: _Problem, K: int, model: FourierModel, seg: Segmentation, trace: list) -> FixedKResult:
    """Squared extrapolation (SQUAREM) on the Fourier coefficients.

    One map evaluation is a full (f, segmentation) sweep; an extrapolated
    point is only accepted when it does not increase the objective.
    """
    opts = prob.opts
    mask = model.active.ravel()

    def step(theta):
        m = FourierModel(model.order, model.period, _unflat(theta, mask, model), model.active)
        f = prob.curve(m)
        s = prob.segment(f, K)
        return s, prob.objective(f, s)

    def G(s):
        m = prob.fit_f(prob.y - s.fitted())
        return m.coeffs.ravel()[mask], m

    theta0, _ = G(seg)
    s0, obj0 = step(theta0)
    trace.append(obj0)
    evals = 1
    converged = False
    while evals < opts.max_iters:
        theta1, _ = G(s0)
        s1, obj1 = step(theta1)
        theta2, _ = G(s1)
        s2, obj2 = step(theta2)
        evals += 2
        r = theta1 - theta0
        v = theta2 - 2 * theta1 + theta0
        new_theta, new_s, new_obj = theta2, s2, obj2
        nv = np.linalg.norm(v)
        if nv > 0:
            alpha = min(-np.linalg.norm(r) / nv, -1.0)
            cand = theta0 - 2 * alpha * r + alpha**2 * v
            cs, cobj = step(cand)
            if cobj <= obj2:
                cand2, _ = G(cs)
                s3, obj3 = step(cand2)
                evals += 1
                if obj3 <= obj2:
                    new_theta, new_s, new_obj = cand2, s3, obj3
        g_old = _curve_theta(prob, theta0, mask, model) + s0.fitted()
        g_new = _curve_theta(prob, new_theta, mask, model) + new_s.fitted()
        trace.append(new_obj)
        theta0, s0, obj0 = new_theta, new_s, new_obj
        if _rel_change(g_new, g_old) < opts.stop_tol:
            converged = True
            break
    final = FourierModel(model.order, model.period, _unflat(theta0, mask, model), model.active)
    return FixedKResult(K, s0, final, obj0, evals, converged, trace, prob.sigma)


def _unflat(theta, mask, model):
    full = np.zeros(mask.size)
    full[mask] = theta
    return full.reshape(model.order, 2)


def _curve_theta(prob, theta, mask, model):
    return prob.curve(FourierModel(model.order, model.period, _unflat(theta, mask, model), model.active))


def thread_count(requested: int | None = None) -> int:
    if requested:
        return max(1, int(requested))
    env = os.environ.get("SEGIWV_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def estimate_sigma(series: TimeSeries, opts: InferenceOptions) -> MonthlyStd:
    if opts.variant == "d":
        return homogeneous_std(series)
    return monthly_std(series)


def infer_all_k(series: TimeSeries, opts: InferenceOptions | None = None, sigma: MonthlyStd | None = None) -> InferenceResult:
    """Run the fixed-K procedure for K = 1..K_max with one shared variance estimate."""
    opts = InferenceOptions() if opts is None else opts
    if opts.K_max * opts.min_len > series.n:
        raise ValueError(f"K_max={opts.K_max} too large for n={series.n}")
    if sigma is None:
        sigma = estimate_sigma(series, opts)
    prob = _Problem(series, sigma, opts)

    def one(K):
        t0 = time.perf_counter()
        res = infer_fixed_k(series, sigma, K, opts, _problem=prob)
        log.debug("K=%d iterations=%d converged=%s %.3fs", K, res.iterations, res.converged, time.perf_counter() - t0)
        return res

    t0 = time.perf_counter()
    nthreads = thread_count(opts.threads)
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            fits = list(pool.map(one, range(1, opts.K_max + 1)))
    else:
        fits = [one(K) for K in range(1, opts.K_max + 1)]
    log.info(
        "n=%d K_max=%d total iterations=%d non-converged=%d wall=%.2fs",
        series.n, opts.K_max, sum(r.iterations for r in fits), sum(not r.converged for r in fits), time.perf_counter() - t0,
    )
    return InferenceResult(series, sigma, opts, fits)

