"""Predictive distributions returned by the models.

Count distributions keep a pmf table on ``0..K`` where ``K`` is grown until
the analytic upper tail drops below ``TAIL_EPS``; cdf and quantiles read from
that table. Discrete quantiles are the smallest integer whose cdf reaches the
requested level.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .errors import NumericalError

TAIL_EPS = 1e-12
MAX_SUPPORT = 1 << 26


class ForecastDistribution:
    kind = "abstract"
    discrete = False

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def median(self) -> float:
        return self.quantile(0.5)

    def quantile(self, u):
        raise NotImplementedError

    def cdf(self, y):
        raise NotImplementedError

    def logpdf(self, y):
        raise NotImplementedError

    def pdf(self, y):
        return np.exp(self.logpdf(y))

    def interval(self, level: float) -> tuple[float, float]:
        lo, hi = self.quantile(np.array([(1.0 - level) / 2.0, (1.0 + level) / 2.0]))
        return float(lo), float(hi)

    def pit(self, y) -> float:
        """cdf(y), or the mid-distribution value cdf(y-1) + pmf(y)/2 for counts."""
        return float(self.cdf(y))

    def params(self) -> dict:
        raise NotImplementedError


class DiscreteForecast(ForecastDistribution):
    """Distribution on the non-negative integers."""

    discrete = True
    _table: np.ndarray | None = None
    _cum: np.ndarray | None = None

    def _logpmf(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sf(self, k: int) -> float:
        """P(Y > k)."""
        raise NotImplementedError

    def _initial_support(self) -> int:
        return 64

    @property
    def table(self) -> np.ndarray:
        if self._table is None:
            kmax = max(int(self._initial_support()), 1)
            while self.sf(kmax) >= TAIL_EPS:
                kmax = 2 * kmax + 1
                if kmax > MAX_SUPPORT:
                    raise NumericalError(f"{self.kind} forecast tail too heavy to tabulate: {self.params()}")
            with np.errstate(divide="ignore"):
                self._table = np.exp(self._logpmf(np.arange(kmax + 1, dtype=float)))
            self._cum = np.cumsum(self._table)
        return self._table

    @property
    def cumulative(self) -> np.ndarray:
        self.table
        return self._cum

    def pmf(self, y):
        y = np.asarray(y, dtype=float)
        ok = (y >= 0) & (np.floor(y) == y)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(ok, np.exp(self._logpmf(np.where(ok, y, 0.0))), 0.0)
        return out if out.ndim else float(out)

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        ok = (y >= 0) & (np.floor(y) == y)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(ok, self._logpmf(np.where(ok, y, 0.0)), -np.inf)
        return out if out.ndim else float(out)

    def cdf(self, y):
        cum = self.cumulative
        k = np.floor(np.asarray(y, dtype=float))
        idx = np.clip(k, 0, len(cum) - 1).astype(np.int64)
        out = np.where(k < 0, 0.0, np.where(k >= len(cum), 1.0, cum[idx]))
        return out if out.ndim else float(out)

    def quantile(self, u):
        cum = self.cumulative
        u = np.asarray(u, dtype=float)
        if u.min() < 0.0 or u.max() > 1.0:
            raise ValueError("quantile level must lie in [0, 1]")
        out = np.minimum(np.searchsorted(cum, u, side="left"), len(cum) - 1).astype(float)
        return out if out.ndim else float(out)

    def pit(self, y) -> float:
        if y < 0:
            return 0.0
        k = math.floor(y)
        below = self.cdf(k - 1) if k >= 1 else 0.0
        return float(below + 0.5 * self.pmf(y))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.random(size)).astype(np.int64)


class NegBinForecast(DiscreteForecast):
    """Negative binomial with shape ``alpha`` and success probability ``beta/(1+beta)``.

    The Gamma(alpha, beta)-Poisson marginal: mean ``alpha/beta``.
    """

    kind = "negbin"

    def __init__(self, alpha: float, beta: float):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._log_p = math.log(self.beta) - math.log1p(self.beta)
        self._log_1mp = -math.log1p(self.beta)
        self._lg_alpha = math.lgamma(self.alpha)

    @property
    def p(self) -> float:
        return self.beta / (1.0 + self.beta)

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def variance(self) -> float:
        return self.alpha * (1.0 + self.beta) / self.beta ** 2

    def _logpmf(self, k):
        return (special.gammaln(k + self.alpha) - self._lg_alpha - special.gammaln(k + 1.0)
                + self.alpha * self._log_p + k * self._log_1mp)

    def sf(self, k):
        if k < 0:
            return 1.0
        return float(special.betainc(k + 1.0, self.alpha, 1.0 / (1.0 + self.beta)))

    def _initial_support(self):
        m = self.mean
        if not math.isfinite(m):
            raise NumericalError(f"negative binomial mean is not finite: {self.params()}")
        return int(m + 10.0 * math.sqrt(self.variance) + 10.0)

    def params(self):
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}


class BernoulliForecast(DiscreteForecast):
    """Beta-Bernoulli predictive: P(1) = alpha / (alpha + beta)."""

    kind = "beta_bernoulli"

    def __init__(self, alpha: float, beta: float):
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.prob = self.alpha / (self.alpha + self.beta)

    @property
    def mean(self) -> float:
        return self.prob

    def _logpmf(self, k):
        with np.errstate(divide="ignore"):
            return np.where(k == 0, np.log1p(-self.prob),
                            np.where(k == 1, math.log(self.prob) if self.prob > 0 else -np.inf, -np.inf))

    def sf(self, k):
        return 1.0 if k < 0 else (self.prob if k < 1 else 0.0)

    def _initial_support(self):
        return 1

    def params(self):
        return {"kind": self.kind, "alpha": self.alpha, "beta": self.beta}


class CountMixtureForecast(DiscreteForecast):
    """Zero state with probability ``1 - prob``; otherwise ``shift + positive``."""

    kind = "dcmm"

    def __init__(self, prob: float, positive: DiscreteForecast, shift: int = 1):
        if not 0.0 <= prob <= 1.0:
            raise NumericalError(f"mixture probability outside [0, 1]: {prob}")
        self.prob = float(prob)
        self.positive = positive
        self.shift = int(shift)

    @property
    def mean(self) -> float:
        return self.prob * (self.shift + self.positive.mean)

    def _logpmf(self, k):
        with np.errstate(divide="ignore", invalid="ignore"):
            log_nonzero = math.log(self.prob) if self.prob > 0 else -np.inf
            pos = log_nonzero + self.positive._logpmf(np.maximum(k - self.shift, 0.0))
            pos = np.where(k >= self.shift, pos, -np.inf)
            if self.shift > 0:
                zero = math.log1p(-self.prob) if self.prob < 1 else -np.inf
                return np.where(k == 0, zero, pos)
            zero = np.logaddexp(math.log1p(-self.prob) if self.prob < 1 else -np.inf, pos)
            return np.where(k == 0, zero, pos)

    def sf(self, k):
        if k < 0:
            return 1.0
        return self.prob * self.positive.sf(k - self.shift)

    def _initial_support(self):
        return self.shift + self.positive._initial_support()

    def params(self):
        return {"kind": self.kind, "prob": self.prob, "positive": self.positive.params()}


class StudentTForecast(ForecastDistribution):
    kind = "student_t"

    def __init__(self, loc: float, scale: float, df: float):
        if not (scale > 0 and df > 0):
            raise NumericalError(f"invalid t forecast: scale={scale}, df={df}")
        self.loc = float(loc)
        self.scale = float(scale)
        self.df = float(df)

    @property
    def mean(self) -> float:
        return self.loc if self.df > 1 else math.nan

    @property
    def median(self) -> float:
        return self.loc

    def quantile(self, u):
        out = self.loc + self.scale * special.stdtrit(self.df, np.asarray(u, dtype=float))
        return out if np.ndim(out) else float(out)

    def cdf(self, y):
        out = special.stdtr(self.df, (np.asarray(y, dtype=float) - self.loc) / self.scale)
        return out if np.ndim(out) else float(out)

    def logpdf(self, y):
        nu = self.df
        z = (np.asarray(y, dtype=float) - self.loc) / self.scale
        out = (math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2) - 0.5 * math.log(nu * math.pi)
               - math.log(self.scale) - (nu + 1) / 2 * np.log1p(z * z / nu))
        return out if np.ndim(out) else float(out)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.loc + self.scale * rng.standard_t(self.df, size)

    def params(self):
        return {"kind": self.kind, "loc": self.loc, "scale": self.scale, "df": self.df}


class EmpiricalForecast(ForecastDistribution):
    """Forecast summarised by Monte Carlo samples (kept sorted).

    Samples are treated as atoms: ``cdf`` is the empirical cdf and quantiles
    use the inverted-cdf rule, so integer samples give integer quantiles.
    """

    kind = "empirical"

    def __init__(self, samples, seed=None):
        self.samples = np.sort(np.asarray(samples, dtype=float))
        if self.samples.size == 0:
            raise ValueError("empirical forecast needs at least one sample")
        self.seed = seed
        self.discrete = bool(np.all(np.floor(self.samples) == self.samples))

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        idx = np.clip(np.ceil(u * self.n).astype(np.int64) - 1, 0, self.n - 1)
        out = self.samples[idx]
        return out if out.ndim else float(out)

    def cdf(self, y):
        out = np.searchsorted(self.samples, np.asarray(y, dtype=float), side="right") / self.n
        return out if np.ndim(out) else float(out)

    def pmf(self, y):
        y = np.asarray(y, dtype=float)
        out = (np.searchsorted(self.samples, y, side="right")
               - np.searchsorted(self.samples, y, side="left")) / self.n
        return out if np.ndim(out) else float(out)

    def logpdf(self, y):
        with np.errstate(divide="ignore"):
            out = np.log(self.pmf(y))
        return out if np.ndim(out) else float(out)

    def pit(self, y) -> float:
        lo = np.searchsorted(self.samples, y, side="left") / self.n
        return float(lo + 0.5 * self.pmf(y))

    def params(self):
        return {"kind": self.kind, "n": self.n, "seed": self.seed}
