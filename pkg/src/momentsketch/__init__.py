"""Moments sketch: a mergeable quantile summary with maximum-entropy estimation."""
from .errors import *  # noqa: F401,F403
from .sketch import MomentsSketch, SketchArray, merge, subtract, serialize, deserialize
from .maxent import (
    BasisSpec, ChebyshevMoments, MaxEntDistribution, SolverConfig,
    to_chebyshev_moments, select_moment_counts, solve_maxent, fit_sketch,
    estimate_quantile, max_stable_order,
)
from .bounds import RankBounds, markov_bound, rtt_bound, quantile_error_bound, quantile_interval
from .cascade import CascadeStats, ThresholdOutcome, threshold
from .lowprec import CompressedSketch, encode_low_precision, decode

__version__ = "0.1.0"
