"""Point and interval forecast metrics, the seasonal-naive baseline, anomaly scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

DEFAULT_LEVELS = (0.80, 0.90, 0.95)


def zape(y: float, f: float) -> float:
    """Zero-adjusted percent error of one step (as a fraction)."""
    if y < 0 or f < 0:
        raise InputError(f"zape needs non-negative inputs, got y={y}, f={f}")
    if y == 0:
        return f / (1.0 + f)
    return abs(y - f) / y


def _pair(observations, forecasts):
    y = np.asarray(observations, dtype=float)
    f = np.asarray(forecasts, dtype=float)
    if y.shape != f.shape:
        raise InputError(f"length mismatch: {y.shape} observations vs {f.shape} forecasts")
    return y, f


def point_metrics(observations, medians) -> tuple[float, float, float]:
    """(RMSE, MAE, mean ZAPE in percent) of forecast medians."""
    y, f = _pair(observations, medians)
    if y.size == 0:
        return math.nan, math.nan, math.nan
    if (y < 0).any() or (f < 0).any():
        raise InputError("zape needs non-negative observations and forecasts")
    err = y - f
    rmse = float(np.sqrt(np.mean(err ** 2)))
    mae = float(np.mean(np.abs(err)))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(y == 0, f / (1.0 + f), np.abs(err) / np.where(y == 0, 1.0, y))
    return rmse, mae, float(100.0 * z.mean())


def coverage(observations, forecasts, levels=DEFAULT_LEVELS) -> dict[float, float]:
    """Fraction of steps whose observation lies in each central interval."""
    y = np.asarray(observations, dtype=float)
    forecasts = list(forecasts)
    if y.size != len(forecasts):
        raise InputError(f"length mismatch: {y.size} observations vs {len(forecasts)} forecasts")
    if not forecasts:
        return {float(lv): math.nan for lv in levels}
    us = []
    for lv in levels:
        us += [(1.0 - lv) / 2.0, (1.0 + lv) / 2.0]
    us = np.array(us)
    q = np.array([np.asarray(fc.quantile(us), dtype=float) for fc in forecasts])
    return {float(lv): float(np.mean((q[:, 2 * i] <= y) & (y <= q[:, 2 * i + 1])))
            for i, lv in enumerate(levels)}


def interval_coverage(observations, lower, upper) -> float:
    y, lo = _pair(observations, lower)
    _, hi = _pair(observations, upper)
    if y.size == 0:
        return math.nan
    return float(np.mean((lo <= y) & (y <= hi)))


def seasonal_naive(counts, period: int = 96) -> np.ndarray:
    """``f_t = y_{t - period}``; the first ``period`` entries are NaN (not forecastable)."""
    y = np.asarray(counts, dtype=float)
    if period < 1:
        raise InputError("period must be >= 1", field="period")
    if y.size <= period:
        raise InputError(f"series of length {y.size} is too short for period {period}", field="counts")
    out = np.full(y.size, np.nan)
    out[period:] = y[:-period]
    return out


def anomaly_score(y, forecast) -> tuple[float, float]:
    """(mid-PIT of y, log predictive density at y).

    Values outside the support give a PIT of 0 or 1 and a log-likelihood of
    ``-inf``. Thresholds for flagging are left to the caller.
    """
    q = min(max(forecast.pit(y), 0.0), 1.0)
    return q, float(forecast.logpdf(y))


@dataclass
class MetricReport:
    rmse: float
    mae: float
    zape: float
    n_steps: int
    coverage: dict[float, float] = field(default_factory=dict)

    def to_dict(self):
        return {"rmse": self.rmse, "mae": self.mae, "zape": self.zape, "n_steps": self.n_steps,
                "coverage": {str(k): v for k, v in self.coverage.items()}}


def evaluate(observations, forecasts, levels=DEFAULT_LEVELS) -> MetricReport:
    """Metrics for a list of forecast distributions over the same steps."""
    forecasts = list(forecasts)
    medians = [fc.median for fc in forecasts]
    rmse, mae, z = point_metrics(observations, medians)
    return MetricReport(rmse, mae, z, len(forecasts), coverage(observations, forecasts, levels))
