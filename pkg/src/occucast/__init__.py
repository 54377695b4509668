"""Occupancy count forecasting with dynamic generalized linear models.

Trajectory records are binned into per-cell occupancy counts
(:mod:`occucast.geo_binning`); each cell gets a Poisson, Bernoulli/Poisson
mixture, Normal or Bernoulli/Normal mixture model chosen from its training
statistics (:mod:`occucast.selection`) and updated sequentially with
closed-form conjugate steps (:mod:`occucast.dglm`, :mod:`occucast.mixtures`).
"""

from .config import PipelineConfig
from .dglm import BernoulliDGLM, ComponentSpec, DiscountSpec, NormalDLM, PoissonDGLM
from .errors import (ConfigError, EmptyInputError, InputError, NumericalError, OccucastError,
                     SolverError)
from .forecasting import forecast_k, project_state, run_series
from .geo_binning import CellId, OccupancyPanel, RawObservation, build_panel, encode_cell
from .metrics import anomaly_score, coverage, point_metrics, seasonal_naive, zape
from .mixtures import DCMM, DLMM
from .selection import initialize_cell, select_family, tune_trend_discount

__version__ = "0.1.0"

__all__ = [
    "BernoulliDGLM", "CellId", "ComponentSpec", "ConfigError", "DCMM", "DLMM", "DiscountSpec",
    "EmptyInputError", "InputError", "NormalDLM", "NumericalError", "OccucastError",
    "OccupancyPanel", "PipelineConfig", "PoissonDGLM", "RawObservation", "SolverError",
    "anomaly_score", "build_panel", "coverage", "encode_cell", "forecast_k", "initialize_cell",
    "point_metrics", "project_state", "run_series", "seasonal_naive", "select_family",
    "tune_trend_discount", "zape",
]
