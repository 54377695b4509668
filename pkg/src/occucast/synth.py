"""Synthetic occupancy panels and agent trajectory streams.

Panel cells follow a daily log-sinusoid rate with its trough in the small
hours. Each (cell, day) can be phase-shifted by an offset drawn from a grid
of ``offset_step`` hours in ``[-offset_hours, offset_hours]``, zero included.
An optional ``texture`` adds fixed random higher harmonics to each cell's
log-rate: detail that repeats every day (and moves with the offset) but that
a low-order seasonal model cannot represent. Counts are zero-inflated
Poisson, or rounded Normal for cells whose base rate exceeds
``normal_threshold``. Every random draw is seeded from
``(seed, entity index)`` so cells and agents are independent of each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError
from .geo_binning import CellId, OccupancyPanel, RawObservation, encode_cell, _grid_index

SECONDS_PER_DAY = 86400
DEFAULT_ORIGIN = 1_700_006_400  # a UTC midnight
METERS_PER_DEGREE = 111_320.0


def _pair(value) -> tuple[float, float]:
    if isinstance(value, (int, float)):
        return float(value), float(value)
    lo, hi = value
    return float(lo), float(hi)


@dataclass(frozen=True)
class SynthConfig:
    n_cells: int = 200
    days: int = 28
    bin_width: int = 900
    base_rate: tuple[float, float] = (5.0, 30.0)
    amplitude: tuple[float, float] = (0.5, 1.0)
    peak_hour: tuple[float, float] = (12.0, 16.0)
    sparsity: tuple[float, float] = (0.0, 0.0)
    offset_hours: float = 0.0
    offset_step: float = 0.5
    texture: float = 0.0
    texture_harmonics: tuple[int, int] = (3, 8)
    normal_threshold: float = 50.0
    normal_scale: float = 1.0
    level: int = 17
    anchor: tuple[float, float] = (38.9, -77.03)
    origin: int = DEFAULT_ORIGIN
    seed: int = 0

    def __post_init__(self):
        for name in ("base_rate", "amplitude", "peak_hour", "sparsity"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        object.__setattr__(self, "anchor", tuple(float(v) for v in self.anchor))
        object.__setattr__(self, "texture_harmonics", tuple(int(v) for v in self.texture_harmonics))
        if self.texture < 0:
            raise ConfigError("texture must be non-negative")
        lo_h, hi_h = self.texture_harmonics
        if not 1 <= lo_h <= hi_h:
            raise ConfigError("texture_harmonics must be a (low, high) range of harmonics >= 1")
        if self.n_cells < 1 or self.days < 1:
            raise ConfigError("n_cells and days must be >= 1")
        if self.bin_width <= 0 or SECONDS_PER_DAY % self.bin_width:
            raise ConfigError("bin_width must divide a day")
        if self.base_rate[0] <= 0 or self.base_rate[0] > self.base_rate[1]:
            raise ConfigError("base_rate must be a positive (low, high) range")
        if self.amplitude[0] < 0 or self.amplitude[0] > self.amplitude[1]:
            raise ConfigError("amplitude must be a non-negative (low, high) range")
        if not 0 <= self.sparsity[0] <= self.sparsity[1] < 1:
            raise ConfigError("sparsity must lie in [0, 1)")
        if self.offset_hours < 0 or self.offset_step <= 0:
            raise ConfigError("offset_hours must be >= 0 and offset_step > 0")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def bins_per_day(self) -> int:
        return SECONDS_PER_DAY // self.bin_width

    @property
    def n_bins(self) -> int:
        return self.days * self.bins_per_day

    def offset_grid(self) -> np.ndarray:
        n = int(math.floor(self.offset_hours / self.offset_step + 1e-9))
        return self.offset_step * np.arange(-n, n + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **kw) -> "SynthConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        unknown = set(kw) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        return replace(self, **kw)


@dataclass
class CellTruth:
    cell: CellId
    family: str
    base_rate: float
    amplitude: float
    peak_hour: float
    zero_prob: float
    offsets_hours: np.ndarray
    rates: np.ndarray
    texture: list[tuple[int, float, float]] = field(default_factory=list)

    def expected_sparsity(self) -> float:
        if self.family == "normal":
            return self.zero_prob
        return float(self.zero_prob + (1 - self.zero_prob) * np.exp(-self.rates).mean())

    def to_dict(self, with_rates: bool = True) -> dict:
        d = {"cell": self.cell.token, "family": self.family, "base_rate": self.base_rate,
             "amplitude": self.amplitude, "peak_hour": self.peak_hour, "zero_prob": self.zero_prob,
             "offsets_hours": self.offsets_hours.tolist(),
             "texture": [list(t) for t in self.texture]}
        if with_rates:
            d["rates"] = [float(f"{r:.6g}") for r in self.rates]
        return d


@dataclass
class SynthTruth:
    config: SynthConfig
    cells: dict[CellId, CellTruth] = field(default_factory=dict)

    def to_dict(self, with_rates: bool = True) -> dict:
        return {"config": self.config.to_dict(),
                "cells": [t.to_dict(with_rates) for t in self.cells.values()]}


def synthetic_cells(n: int, level: int, anchor=(38.9, -77.03)) -> list[CellId]:
    """``n`` adjacent cells in row-major order from the cell containing ``anchor``."""
    row0, col0 = _grid_index(anchor[0], anchor[1], level)
    width = max(1, math.ceil(math.sqrt(n)))
    return [CellId(level, row0 + i // width, col0 + i % width) for i in range(n)]


def daily_log_profile(hours: np.ndarray, amplitude: float, peak_hour: float,
                      texture=()) -> np.ndarray:
    """Log-rate shape; ``texture`` holds (harmonic, amplitude, phase) terms."""
    out = amplitude * np.cos(2 * np.pi * (hours - peak_hour) / 24.0)
    for h, a, phase in texture:
        out = out + a * np.cos(2 * np.pi * h * hours / 24.0 + phase)
    return out


def _zero_prob(target: float, poisson_zero: float) -> float:
    # total zero fraction = pi + (1 - pi) * poisson_zero
    if target <= poisson_zero:
        return 0.0
    return (target - poisson_zero) / (1.0 - poisson_zero)


def generate_cell(config: SynthConfig, index: int, cell: CellId) -> tuple[np.ndarray, CellTruth]:
    rng = np.random.default_rng([config.seed, index])
    lo, hi = config.base_rate
    base = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    amp = float(rng.uniform(*config.amplitude))
    peak = float(rng.uniform(*config.peak_hour))
    target = float(rng.uniform(*config.sparsity))
    offsets = rng.choice(config.offset_grid(), size=config.days)
    texture = []
    if config.texture > 0:
        lo_h, hi_h = config.texture_harmonics
        harmonics = range(lo_h, hi_h + 1)
        a = config.texture / math.sqrt(len(harmonics))
        texture = [(h, a, float(rng.uniform(0, 2 * np.pi))) for h in harmonics]
    bpd = config.bins_per_day
    hours = (np.arange(bpd) + 0.5) * 24.0 / bpd
    shifted = hours[None, :] - offsets[:, None]
    rates = (base * np.exp(daily_log_profile(shifted, amp, peak, texture))).ravel()
    if base > config.normal_threshold:
        family = "normal"
        pi0 = target
        y = np.rint(rates + config.normal_scale * np.sqrt(rates) * rng.standard_normal(rates.size))
        y = np.maximum(y, 0.0)
    else:
        family = "zip"
        pi0 = _zero_prob(target, float(np.exp(-rates).mean()))
        y = rng.poisson(rates).astype(float)
    if pi0 > 0:
        y[rng.random(rates.size) < pi0] = 0.0
    truth = CellTruth(cell, family, base, amp, peak, float(pi0), offsets.astype(float), rates, texture)
    return y.astype(np.int64), truth


def generate_panel(config: SynthConfig | None = None) -> tuple[OccupancyPanel, SynthTruth]:
    """Seeded panel plus its ground truth."""
    config = config or SynthConfig()
    cells = synthetic_cells(config.n_cells, config.level, config.anchor)
    truth = SynthTruth(config)
    series = {}
    for i, cell in enumerate(cells):
        series[cell], truth.cells[cell] = generate_cell(config, i, cell)
    panel = OccupancyPanel(config.level, config.bin_width, config.origin, config.n_bins, series, {})
    return panel, truth


def write_truth(path: str | Path, truth: SynthTruth, with_rates: bool = True) -> None:
    Path(path).write_text(json.dumps(truth.to_dict(with_rates), sort_keys=True) + "\n",
                          encoding="utf-8")


@dataclass(frozen=True)
class TrajectoryConfig:
    sample_interval: int = 60
    jitter_m: float = 0.0
    dropout: float = 0.0
    stationary: bool = False
    anchor: tuple[float, float] = (38.9, -77.03)
    radius_m: float = 2000.0
    origin: int = DEFAULT_ORIGIN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "anchor", tuple(float(v) for v in self.anchor))
        if self.sample_interval <= 0:
            raise ConfigError("sample_interval must be positive")
        if self.jitter_m < 0 or self.radius_m < 0:
            raise ConfigError("jitter_m and radius_m must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["anchor"] = list(self.anchor)
        return d


def _offset_degrees(lat, dx_m, dy_m):
    return dy_m / METERS_PER_DEGREE, dx_m / (METERS_PER_DEGREE * math.cos(math.radians(lat)))


def agent_positions(index: int, days: int, config: TrajectoryConfig):
    """(timestamps, lats, lons) for one agent, before dropout filtering."""
    rng = np.random.default_rng([config.seed, index])
    lat0, lon0 = config.anchor

    def place():
        r = config.radius_m * math.sqrt(rng.random())
        theta = 2 * math.pi * rng.random()
        dlat, dlon = _offset_degrees(lat0, r * math.cos(theta), r * math.sin(theta))
        return lat0 + dlat, lon0 + dlon

    home, work = place(), place()
    start_h, end_h = rng.uniform(7, 10), rng.uniform(16, 19)
    per_day = SECONDS_PER_DAY // config.sample_interval
    ts = config.origin + config.sample_interval * np.arange(days * per_day, dtype=np.int64)
    hour = ((ts - config.origin) % SECONDS_PER_DAY) / 3600.0
    at_work = np.zeros(ts.size, bool) if config.stationary else (hour >= start_h) & (hour < end_h)
    lat = np.where(at_work, work[0], home[0])
    lon = np.where(at_work, work[1], home[1])
    if config.jitter_m > 0:
        dlat, dlon = _offset_degrees(lat0, config.jitter_m * rng.standard_normal(ts.size),
                                     config.jitter_m * rng.standard_normal(ts.size))
        lat, lon = lat + dlat, lon + dlon
    keep = rng.random(ts.size) >= config.dropout if config.dropout > 0 else slice(None)
    return ts[keep], np.clip(lat[keep], -90, 90), np.clip(lon[keep], -180, 180)


def generate_trajectories(n_agents: int, days: int,
                          config: TrajectoryConfig | None = None) -> Iterator[RawObservation]:
    """Position records agent by agent, in time order within each agent."""
    if n_agents < 1:
        raise ConfigError("n_agents must be >= 1")
    if days < 1:
        raise ConfigError("days must be >= 1")
    config = config or TrajectoryConfig()
    for i in range(n_agents):
        agent = f"a{i:05d}"
        ts, lat, lon = agent_positions(i, days, config)
        for t, la, lo in zip(ts.tolist(), lat.tolist(), lon.tolist()):
            yield RawObservation(agent, la, lo, t)


def multi_cell_agent_bins(observations, level: int, width: int) -> int:
    """Number of (agent, bin) pairs seen in more than one cell."""
    seen: dict[tuple[str, int], set] = {}
    for obs in observations:
        seen.setdefault((obs.agent_id, obs.timestamp // width), set()).add(
            encode_cell(obs.lat, obs.lon, level))
    return sum(1 for cells in seen.values() if len(cells) > 1)
