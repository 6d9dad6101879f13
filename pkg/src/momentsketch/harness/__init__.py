"""Cube, window, evaluation and benchmark tooling around the sketch library."""
from .cube import CubeStore, build_cube, ingest, query_quantile, query_threshold_groups
from .evaluate import EvalReport, evaluate, evaluate_estimator, quantile_error
from .window import PaneSeries, query_sliding_window

__all__ = [
    "CubeStore", "build_cube", "ingest", "query_quantile", "query_threshold_groups",
    "EvalReport", "evaluate", "evaluate_estimator", "quantile_error",
    "PaneSeries", "query_sliding_window",
]
