"""Segmentation of series with a periodic bias and monthly varying noise variance."""

from .core import (
    DataError, FourierModel, MonthIndex, MonthlyStd, Segmentation, TimeSeries,
    evaluate_fourier, ingest, month_index, read_series_csv,
)
from .dp import DPResult, dp_segment, ssr_of, weighted_mean
from .fourier import fit_unweighted, fit_weighted, harmonic_design, select_significant
from .inference import InferenceOptions, InferenceResult, FixedKResult, infer_all_k, infer_fixed_k
from .robust import homogeneous_std, monthly_std, qn_scale
from .selection import CRITERIA, select_all, select_bm, select_lavielle, select_mbic

__version__ = "0.1.0"
