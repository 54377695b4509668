"""Pipeline configuration: one flat, fully serialisable key set.

Keys (defaults in parentheses):

    level (14)              spatial cell level
    bin_width (900)         seconds per time bin
    origin (null)           epoch seconds of bin 0; null = floor of earliest record
    n_bins (null)           panel length; null = up to the last observed bin
    init_window (288)       bins used for family selection and discount tuning
    period (null)           seasonal period in bins; null = one day of bins
    harmonics (2)           seasonal harmonics
    trend_order (1)         1 = local level, 2 = local linear trend
    seasonal_discount (0.994)
    aux_discount (0.9)      random-effect / observation-variance discount
    regressor_discount (0.998)
    trend_grid ([0.96, 0.97, 1.0])
    tuning_burn_in (0)      leading tuning steps excluded from the MAE
    mean_threshold (50), sparsity_threshold (0.15)
    horizons ([1])          forecast steps ahead
    levels ([0.8, 0.9, 0.95])
    include_W (false)       keep discounting beyond one step in k-step forecasts
    eval_start (null)       metrics use targets t > eval_start; null = init_window
    workers (1)             processes used across cells
    seed (0)                root seed for all randomness
    dlmm_samples (5000)     Monte Carlo draws per DLMM forecast
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .dglm import ComponentSpec, DiscountSpec
from .errors import ConfigError

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class PipelineConfig:
    level: int = 14
    bin_width: int = 900
    origin: int | None = None
    n_bins: int | None = None
    init_window: int = 288
    period: int | None = None
    harmonics: int = 2
    trend_order: int = 1
    seasonal_discount: float = 0.994
    aux_discount: float = 0.9
    regressor_discount: float = 0.998
    trend_grid: tuple[float, ...] = (0.96, 0.97, 1.0)
    tuning_burn_in: int = 0
    mean_threshold: float = 50.0
    sparsity_threshold: float = 0.15
    horizons: tuple[int, ...] = (1,)
    levels: tuple[float, ...] = (0.8, 0.9, 0.95)
    include_W: bool = False
    eval_start: int | None = None
    workers: int = 1
    seed: int = 0
    dlmm_samples: int = 5000

    def __post_init__(self):
        for name in ("trend_grid", "horizons", "levels"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.bin_width <= 0:
            raise ConfigError("bin_width must be positive")
        if self.period is None and SECONDS_PER_DAY % self.bin_width:
            raise ConfigError(f"bin_width {self.bin_width} does not divide a day; set period explicitly")
        if self.init_window < 1:
            raise ConfigError("init_window must be >= 1")
        if not self.trend_grid:
            raise ConfigError("trend_grid must not be empty")
        if any(not 0 < d <= 1 for d in self.trend_grid):
            raise ConfigError("trend_grid values must lie in (0, 1]")
        if not self.horizons or any(int(k) != k or k < 1 for k in self.horizons):
            raise ConfigError("horizons must be positive integers")
        if any(not 0 < lv < 1 for lv in self.levels):
            raise ConfigError("coverage levels must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.dlmm_samples < 1:
            raise ConfigError("dlmm_samples must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        # raises ConfigError on invalid combinations
        self.component_spec()
        self.discount_spec()

    @property
    def seasonal_period(self) -> int:
        return self.period if self.period is not None else SECONDS_PER_DAY // self.bin_width

    @property
    def metric_start(self) -> int:
        return self.init_window if self.eval_start is None else self.eval_start

    def component_spec(self) -> ComponentSpec:
        return ComponentSpec(self.trend_order, self.seasonal_period, self.harmonics)

    def discount_spec(self, trend: float = 1.0) -> DiscountSpec:
        return DiscountSpec(trend=trend, seasonal=self.seasonal_discount,
                            regressors=self.regressor_discount, aux=self.aux_discount)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("trend_grid", "horizons", "levels"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            if path.suffix.lower() in (".yaml", ".yml"):
                import yaml
                data = yaml.safe_load(text) or {}
            else:
                data = json.loads(text)
        except Exception as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **overrides)
