"""Two-part mixture models for sparse counts.

DCMM: Bernoulli DGLM for ``y > 0`` plus a Poisson DGLM on ``y - 1`` for the
non-zero steps, so the positive part has support {1, 2, ...}.
DLMM: Bernoulli DGLM plus a Normal DLM on the raw non-zero values; forecasts
are Monte Carlo samples.

The positive sub-model evolves every step and treats zero steps as missing,
which keeps both parts on the same time index.
"""

from __future__ import annotations

import numpy as np

from .dglm import (STATE_VERSION, BernoulliDGLM, ComponentSpec, DiscountSpec, NormalDLM,
                   PoissonDGLM, _check_count, _is_missing)
from .distributions import CountMixtureForecast, EmpiricalForecast, StudentTForecast
from .errors import InputError

DEFAULT_SAMPLES = 5000


class _Mixture:
    family = "abstract"
    positive_cls = PoissonDGLM

    def __init__(self, spec: ComponentSpec | None = None, discounts: DiscountSpec | None = None,
                 zero_model: BernoulliDGLM | None = None, positive_model=None):
        self.zero_model = zero_model or BernoulliDGLM(spec, discounts)
        self.positive_model = positive_model or self.positive_cls(spec, discounts)
        if self.zero_model.spec != self.positive_model.spec:
            raise InputError("mixture components must share the same component spec")
        if self.zero_model.t != self.positive_model.t:
            raise InputError("mixture components are out of step")
        self._fc_cache = None

    @property
    def spec(self) -> ComponentSpec:
        return self.zero_model.spec

    @property
    def discounts(self) -> DiscountSpec:
        return self.zero_model.discounts

    @property
    def t(self) -> int:
        return self.zero_model.t

    @property
    def dim(self) -> int:
        return self.spec.dim

    def _compose(self, zero_fc, positive_fc, k):
        raise NotImplementedError

    def forecast(self, k: int = 1, include_W: bool = False, x=None):
        if k == 1 and self._fc_cache is not None and self._fc_cache[0] == (self.t, x is None):
            return self._fc_cache[1]
        fc = self._compose(self.zero_model.forecast(k, include_W, x),
                           self.positive_model.forecast(k, include_W, x), k)
        if k == 1 and x is None:
            self._fc_cache = ((self.t, True), fc)
        return fc

    def _positive_value(self, y):
        raise NotImplementedError

    def update(self, y, x=None):
        if not _is_missing(y):
            _check_count(y)
        fc = self.forecast(1, x=x)
        if _is_missing(y):
            self.zero_model.update(None, x)
            self.positive_model.update(None, x)
        else:
            self.zero_model.update(1 if y > 0 else 0, x)
            self.positive_model.update(self._positive_value(y) if y > 0 else None, x)
        self._fc_cache = None
        return fc

    def _extra(self):
        return {}

    def to_dict(self) -> dict:
        return {"version": STATE_VERSION, "family": self.family,
                "zero_model": self.zero_model.to_dict(),
                "positive_model": self.positive_model.to_dict(), **self._extra()}

    @classmethod
    def from_dict(cls, d: dict):
        if d.get("version") != STATE_VERSION or d.get("family") != cls.family:
            raise InputError(f"state record is not a version-{STATE_VERSION} {cls.family} model")
        kw = {k: d[k] for k in ("seed", "n_samples") if k in d}
        return cls(zero_model=BernoulliDGLM.from_dict(d["zero_model"]),
                   positive_model=cls.positive_cls.from_dict(d["positive_model"]), **kw)


class DCMM(_Mixture):
    family = "dcmm"
    positive_cls = PoissonDGLM

    def _compose(self, zero_fc, positive_fc, k):
        return CountMixtureForecast(zero_fc.prob, positive_fc, shift=1)

    def _positive_value(self, y):
        return y - 1


def sample_dlmm(prob: float, positive: StudentTForecast, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``z ~ Bernoulli(prob)``; non-zero draws are t samples clipped at 0 and rounded."""
    nonzero = rng.random(n) < prob
    draws = np.rint(np.maximum(positive.sample(rng, n), 0.0))
    return np.where(nonzero, draws, 0.0)


class DLMM(_Mixture):
    """Sample-based forecasts; draws are seeded from ``(seed, t, k)``."""

    family = "dlmm"
    positive_cls = NormalDLM

    def __init__(self, spec=None, discounts=None, zero_model=None, positive_model=None,
                 seed: int = 0, n_samples: int = DEFAULT_SAMPLES):
        super().__init__(spec, discounts, zero_model, positive_model)
        self.seed = int(seed)
        self.n_samples = int(n_samples)

    def _compose(self, zero_fc, positive_fc, k):
        key = [self.seed, self.t, k]
        rng = np.random.default_rng(key)
        return EmpiricalForecast(sample_dlmm(zero_fc.prob, positive_fc, self.n_samples, rng), seed=key)

    def _positive_value(self, y):
        return float(y)

    def _extra(self):
        return {"seed": self.seed, "n_samples": self.n_samples}


def dcmm_step(model: DCMM, y):
    fc = model.update(y)
    return model, fc


def dlmm_step(model: DLMM, y):
    fc = model.update(y)
    return model, fc


def mixture_forecast_k(model: _Mixture, k: int, include_W: bool = False):
    if k < 1:
        raise ValueError("horizon k must be >= 1")
    return model.forecast(k, include_W)
