"""k-step marginal forecasts and the sequential forecast/update loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import anomaly_score
from .mixtures import _Mixture


def project_state(model, k: int, include_W: bool = False):
    """``(a, R)`` k steps past the current posterior; a pair of those for mixtures."""
    if isinstance(model, _Mixture):
        return (model.zero_model.project(k, include_W), model.positive_model.project(k, include_W))
    return model.project(k, include_W)


def forecast_k(model, k: int, include_W: bool = False):
    """Marginal predictive distribution of ``y_{t+k}`` given data through ``t``."""
    if k < 1:
        raise ValueError("horizon k must be >= 1")
    return model.forecast(k, include_W)


def summarize(fc, levels) -> tuple[float, float, list[float], list[float]]:
    """Median, mean and (lower, upper) interval endpoints for each level."""
    us = [0.5]
    for lv in levels:
        us += [(1.0 - lv) / 2.0, (1.0 + lv) / 2.0]
    qs = np.asarray(fc.quantile(np.array(us)), dtype=float)
    return float(qs[0]), float(fc.mean), qs[1::2].tolist(), qs[2::2].tolist()


@dataclass
class HorizonTrace:
    horizon: int
    levels: tuple[float, ...]
    origin: list[int] = field(default_factory=list)
    target: list[int] = field(default_factory=list)
    median: list[float] = field(default_factory=list)
    mean: list[float] = field(default_factory=list)
    lower: list[list[float]] = field(default_factory=list)
    upper: list[list[float]] = field(default_factory=list)
    params: list[dict] = field(default_factory=list)
    pit: list[float] = field(default_factory=list)
    loglik: list[float] = field(default_factory=list)

    def add(self, origin, target, fc, record_params):
        med, mean, lo, hi = summarize(fc, self.levels)
        self.origin.append(origin)
        self.target.append(target)
        self.median.append(med)
        self.mean.append(mean)
        self.lower.append(lo)
        self.upper.append(hi)
        if record_params:
            self.params.append(fc.params())

    def to_dict(self) -> dict:
        d = {"horizon": self.horizon, "levels": list(self.levels), "origin": self.origin,
             "target": self.target, "median": self.median, "mean": self.mean,
             "lower": self.lower, "upper": self.upper}
        if self.params:
            d["params"] = self.params
        if self.pit:
            d["pit"], d["loglik"] = self.pit, [ll if math.isfinite(ll) else None for ll in self.loglik]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HorizonTrace":
        tr = cls(int(d["horizon"]), tuple(d["levels"]), list(d["origin"]), list(d["target"]),
                 list(d["median"]), list(d["mean"]), [list(r) for r in d["lower"]],
                 [list(r) for r in d["upper"]], list(d.get("params", [])), list(d.get("pit", [])),
                 [-math.inf if v is None else v for v in d.get("loglik", [])])
        return tr

    def lower_at(self, level) -> np.ndarray:
        return np.array([row[self.levels.index(level)] for row in self.lower])

    def upper_at(self, level) -> np.ndarray:
        return np.array([row[self.levels.index(level)] for row in self.upper])


@dataclass
class SeriesRun:
    traces: dict[int, HorizonTrace]
    n_steps: int
    seconds: float

    @property
    def seconds_per_step(self) -> float:
        return self.seconds / self.n_steps if self.n_steps else 0.0


def run_series(model, counts, horizons=(1,), levels=(0.8, 0.9, 0.95), emit_after: int = 0,
               include_W: bool = False, record_params: bool = False, stop: int | None = None,
               traces: dict[int, HorizonTrace] | None = None, on_step=None) -> SeriesRun:
    """Forecast then update through ``counts``, starting at the model's current ``t``.

    At each origin ``o`` (observations absorbed so far) a forecast for target
    ``o + k`` is recorded when ``emit_after < o + k <= len(counts)``; targets
    are 1-based bin indices. Horizon-1 records also carry the anomaly score
    (mid-PIT and log-likelihood) of the realised count.

    Passing ``traces`` from an earlier partial run appends to them, which is
    how a resumed run continues. ``on_step(model, traces)`` is called after
    every update.
    """
    y = np.asarray(counts)
    T = y.size if stop is None else min(stop, y.size)
    levels = tuple(levels)
    if traces is None:
        traces = {k: HorizonTrace(k, levels) for k in horizons}
    longer = sorted(k for k in horizons if k != 1)
    start = model.t
    t0 = time.perf_counter()
    for o in range(start, T):
        for k in longer:
            target = o + k
            if emit_after < target <= y.size:
                traces[k].add(o, target, model.forecast(k, include_W), record_params)
        obs = int(y[o])
        fc = model.update(obs)
        if 1 in traces and o + 1 > emit_after:
            tr = traces[1]
            tr.add(o, o + 1, fc, record_params)
            q, ll = anomaly_score(obs, fc)
            tr.pit.append(q)
            tr.loglik.append(ll)
        if on_step is not None:
            on_step(model, traces)
    return SeriesRun(traces, T - start, time.perf_counter() - t0)
